// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include "patchwork/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "patchwork/dataset.hpp"
#include "patchwork/image.hpp"

namespace patchwork::pipe {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- RunConfig ----

RunConfig RunConfig::from_kv(const KvConfig& kv) {
    RunConfig c;
    c.out_dir = kv.get_str("out_dir", c.out_dir);
    c.seed = static_cast<uint64_t>(kv.get_i64("seed", 0));
    c.image_size = kv.get_int("image_size", c.image_size);
    c.n_images = kv.get_int("n_images", c.n_images);

    c.schedule_steps = kv.get_int("schedule.steps", c.schedule_steps);
    c.beta_start = kv.get_double("schedule.beta_start", c.beta_start);
    c.beta_end = kv.get_double("schedule.beta_end", c.beta_end);

    c.vae_steps = kv.get_int("vae.steps", c.vae_steps);
    c.vae_batch = kv.get_int("vae.batch", c.vae_batch);
    c.vae_lr = kv.get_double("vae.lr", c.vae_lr);
    c.vae_latent_channels = kv.get_int("vae.latent_channels", c.vae_latent_channels);
    c.vae_ch_full = kv.get_int("vae.ch_full", c.vae_ch_full);
    c.vae_ch_half = kv.get_int("vae.ch_half", c.vae_ch_half);
    c.vae_ch_quarter = kv.get_int("vae.ch_quarter", c.vae_ch_quarter);
    c.vae_kl_weight = kv.get_double("vae.kl_weight", c.vae_kl_weight);

    c.backbone_steps = kv.get_int("backbone.steps", c.backbone_steps);
    c.backbone_batch = kv.get_int("backbone.batch", c.backbone_batch);
    c.backbone_lr = kv.get_double("backbone.lr", c.backbone_lr);
    c.unet_base = kv.get_int("unet.base", c.unet_base);
    c.unet_mid = kv.get_int("unet.mid", c.unet_mid);
    c.unet_tdim = kv.get_int("unet.tdim", c.unet_tdim);
    c.unet_heads = kv.get_int("unet.heads", c.unet_heads);
    c.unet_cond_dim = kv.get_int("unet.cond_dim", c.unet_cond_dim);

    c.mae_pretrain_steps = kv.get_int("mae.pretrain_steps", c.mae_pretrain_steps);
    c.mae_finetune_steps = kv.get_int("mae.finetune_steps", c.mae_finetune_steps);
    c.mae_batch = kv.get_int("mae.batch", c.mae_batch);
    c.mae_lr = kv.get_double("mae.lr", c.mae_lr);
    c.mae_patch = kv.get_int("mae.patch", c.mae_patch);
    c.mae_enc_dim = kv.get_int("mae.enc_dim", c.mae_enc_dim);
    c.mae_enc_depth = kv.get_int("mae.enc_depth", c.mae_enc_depth);
    c.mae_dec_dim = kv.get_int("mae.dec_dim", c.mae_dec_dim);
    c.mae_dec_depth = kv.get_int("mae.dec_depth", c.mae_dec_depth);
    c.mae_heads = kv.get_int("mae.heads", c.mae_heads);

    c.align_steps = kv.get_int("align.steps", c.align_steps);
    c.align_batch = kv.get_int("align.batch", c.align_batch);
    c.align_lr = kv.get_double("align.lr", c.align_lr);
    c.align_variant = kv.get_str("align.variant", c.align_variant);
    c.align_blocks = kv.get_int("align.num_blocks", c.align_blocks);
    c.align_heads = kv.get_int("align.heads", c.align_heads);

    c.decoder_steps = kv.get_int("decoder.steps", c.decoder_steps);
    c.decoder_batch = kv.get_int("decoder.batch", c.decoder_batch);
    c.decoder_lr = kv.get_double("decoder.lr", c.decoder_lr);
    c.decoder_masked_weight = kv.get_double("decoder.masked_weight", c.decoder_masked_weight);

    c.sampler.num_steps = kv.get_int("sampler.steps", c.sampler.num_steps);
    c.sampler.eta = kv.get_double("sampler.eta", c.sampler.eta);
    c.sampler.seed = static_cast<uint64_t>(kv.get_i64("sampler.seed", 0));
    c.validate();
    return c;
}

void RunConfig::validate() const {
    if (out_dir.empty()) throw std::invalid_argument("run config: out_dir required");
    if (image_size > 128)
        throw std::invalid_argument("run config: image_size " + std::to_string(image_size) +
                                    " exceeds the desk-scale profile (max 128)");
    if (image_size % (4 * mae_patch) != 0)
        throw std::invalid_argument("run config: image_size must be divisible by 4x the prior patch");
    if (n_images < 1) throw std::invalid_argument("run config: n_images must be positive");
}

vae::VAEConfig RunConfig::vae_config() const {
    vae::VAEConfig c;
    c.image_size = image_size;
    c.latent_channels = vae_latent_channels;
    c.ch_full = vae_ch_full;
    c.ch_half = vae_ch_half;
    c.ch_quarter = vae_ch_quarter;
    c.kl_weight = vae_kl_weight;
    return c;
}

unet::UNetConfig RunConfig::unet_config() const {
    unet::UNetConfig c;
    c.latent_size = vae_config().latent_size();
    c.latent_channels = vae_latent_channels;
    c.base = unet_base;
    c.mid = unet_mid;
    c.tdim = unet_tdim;
    c.heads = unet_heads;
    c.cond_dim = unet_cond_dim;
    c.cond_tokens = mae_config().tokens();
    return c;
}

mae::MAEConfig RunConfig::mae_config() const {
    mae::MAEConfig c;
    c.image_size = image_size;
    c.patch = mae_patch;
    c.enc_dim = mae_enc_dim;
    c.enc_depth = mae_enc_depth;
    c.dec_dim = mae_dec_dim;
    c.dec_depth = mae_dec_depth;
    c.heads = mae_heads;
    return c;
}

align::AlignmentConfig RunConfig::align_config() const {
    align::AlignmentConfig c;
    c.in_dim = mae_dec_dim;
    c.cond_dim = unet_cond_dim;
    c.tokens = mae_config().tokens();
    c.num_blocks = align_blocks;
    c.heads = align_heads;
    c.variant = align_variant;
    return c;
}

Tensor RunConfig::train_image(uint64_t index) const {
    return data::toy_image(Rng::derive(seed, 0xda7aULL + index), image_size);
}

std::string RunConfig::checkpoint_path(const std::string& stage) const {
    return (fs::path(out_dir) / (stage + ".pwck")).string();
}

// ---- stage machinery ----

namespace {

// one stage at a time per run directory
class StageLock {
public:
    explicit StageLock(const std::string& dir) : path_(fs::path(dir) / ".lock") {
        fs::create_directories(dir);
        if (fs::exists(path_))
            throw std::runtime_error("run directory locked by another stage: " + path_.string() +
                                     " (delete the file if the previous run crashed)");
        std::ofstream(path_) << "locked\n";
    }
    ~StageLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

private:
    fs::path path_;
};

void require_stage(const RunConfig& cfg, const std::string& dep, const std::string& for_stage) {
    if (!fs::exists(cfg.checkpoint_path(dep)))
        throw std::runtime_error("stage '" + for_stage + "' requires the '" + dep +
                                 "' checkpoint; run the " + dep + " stage first");
}

fs::path frozen_record_path(const RunConfig& cfg) { return fs::path(cfg.out_dir) / "frozen.json"; }

json read_frozen_record(const RunConfig& cfg) {
    std::ifstream in(frozen_record_path(cfg));
    if (!in) return json::object();
    json j;
    in >> j;
    return j;
}

void update_frozen_record(const RunConfig& cfg, const std::string& key, uint64_t hash) {
    json j = read_frozen_record(cfg);
    j[key] = hash;
    std::ofstream(frozen_record_path(cfg)) << j.dump(2) << "\n";
}

void check_frozen(const RunConfig& cfg, const std::string& key, uint64_t hash,
                  const std::string& stage) {
    json j = read_frozen_record(cfg);
    if (!j.contains(key))
        throw std::runtime_error("stage '" + stage + "': no frozen record for '" + key +
                                 "' in " + frozen_record_path(cfg).string());
    if (j.at(key).get<uint64_t>() != hash)
        throw std::runtime_error("stage '" + stage + "': '" + key +
                                 "' parameters differ from the frozen record; the upstream "
                                 "checkpoint was modified after freezing");
}

void write_provenance(const RunConfig& cfg, const std::string& stage, const Checkpoint& ck,
                      json extra) {
    json j = {{"stage", stage},
              {"seed", cfg.seed},
              {"image_size", cfg.image_size},
              {"n_images", cfg.n_images},
              {"checkpoint", cfg.checkpoint_path(stage)},
              {"checkpoint_hash", ck.content_hash()},
              {"step", ck.step}};
    j.update(extra);
    std::ofstream((fs::path(cfg.out_dir) / (stage + ".provenance.json")))
        << j.dump(2) << "\n";
}

backbone::ImageSource make_source(const RunConfig& cfg) {
    return [cfg](uint64_t i) { return cfg.train_image(i % static_cast<uint64_t>(cfg.n_images)); };
}

void check_profile(const RunConfig& cfg, int ck_size, const std::string& what) {
    if (ck_size != cfg.image_size)
        throw std::runtime_error(what + " checkpoint was trained at " + std::to_string(ck_size) +
                                 "^2 but this run uses " + std::to_string(cfg.image_size) +
                                 "^2; mixing resolution profiles is not supported");
}

std::string stage_vae(const RunConfig& cfg) {
    vae::VAE model(cfg.vae_config(), Rng::derive(cfg.seed, 1));
    vae::VAETrainConfig tc;
    tc.steps = cfg.vae_steps;
    tc.batch = cfg.vae_batch;
    tc.lr = cfg.vae_lr;
    tc.seed = Rng::derive(cfg.seed, 2);
    double loss = vae::train_vae(model, tc, make_source(cfg));
    Checkpoint ck = model.to_checkpoint(cfg.vae_steps);
    ck.save(cfg.checkpoint_path("vae"));
    write_provenance(cfg, "vae", ck, {{"final_loss", loss}});
    return cfg.checkpoint_path("vae");
}

std::string stage_backbone(const RunConfig& cfg) {
    require_stage(cfg, "vae", "backbone");
    vae::VAE v = vae::VAE::from_checkpoint(Checkpoint::load(cfg.checkpoint_path("vae")));
    check_profile(cfg, v.config().image_size, "vae");
    auto src = make_source(cfg);
    double scale = vae::estimate_latent_scale(v, src, std::min(cfg.n_images, 16));
    unet::UNet u(cfg.unet_config(), Rng::derive(cfg.seed, 3));
    NoiseSchedule sched = NoiseSchedule::linear(cfg.schedule_steps, cfg.beta_start, cfg.beta_end);
    backbone::Backbone bb(std::move(v), std::move(u), sched, scale);
    backbone::BackboneTrainConfig tc;
    tc.steps = cfg.backbone_steps;
    tc.batch = cfg.backbone_batch;
    tc.lr = cfg.backbone_lr;
    tc.seed = Rng::derive(cfg.seed, 4);
    backbone::TrainCurve curve = backbone::train_backbone(bb, tc, src);
    Checkpoint ck = bb.to_checkpoint(cfg.backbone_steps);
    ck.save(cfg.checkpoint_path("backbone"));
    update_frozen_record(cfg, "backbone", bb.param_hash());
    write_provenance(cfg, "backbone", ck,
                     {{"latent_scale", scale},
                      {"loss_head", curve.head_mean},
                      {"loss_tail", curve.tail_mean}});
    return cfg.checkpoint_path("backbone");
}

std::string stage_mae(const RunConfig& cfg) {
    mae::MAE model(cfg.mae_config(), Rng::derive(cfg.seed, 5));
    auto src = make_source(cfg);
    mae::MAETrainConfig pre;
    pre.steps = cfg.mae_pretrain_steps;
    pre.batch = cfg.mae_batch;
    pre.lr = cfg.mae_lr;
    pre.seed = Rng::derive(cfg.seed, 6);
    pre.policy = mae::MAETrainConfig::Policy::pretrain_uniform;
    double pre_loss = mae::train_mae(model, pre, src);
    mae::MAETrainConfig fin = pre;
    fin.steps = cfg.mae_finetune_steps;
    fin.seed = Rng::derive(cfg.seed, 7);
    fin.policy = mae::MAETrainConfig::Policy::finetune_inpaint;
    double fin_loss = mae::train_mae(model, fin, src);
    Checkpoint ck = model.to_checkpoint(cfg.mae_pretrain_steps + cfg.mae_finetune_steps);
    ck.save(cfg.checkpoint_path("mae"));
    update_frozen_record(cfg, "mae", params_hash(model.params()));
    write_provenance(cfg, "mae", ck,
                     {{"pretrain_loss", pre_loss}, {"finetune_loss", fin_loss}});
    return cfg.checkpoint_path("mae");
}

std::string stage_alignment(const RunConfig& cfg) {
    require_stage(cfg, "backbone", "alignment");
    require_stage(cfg, "mae", "alignment");
    backbone::Backbone bb =
        backbone::Backbone::from_checkpoint(Checkpoint::load(cfg.checkpoint_path("backbone")));
    mae::MAE prior = mae::MAE::from_checkpoint(Checkpoint::load(cfg.checkpoint_path("mae")));
    check_profile(cfg, bb.vae().config().image_size, "backbone");
    check_profile(cfg, prior.config().image_size, "mae");
    check_frozen(cfg, "backbone", bb.param_hash(), "alignment");
    check_frozen(cfg, "mae", params_hash(prior.params()), "alignment");

    align::Alignment model(cfg.align_config(), Rng::derive(cfg.seed, 8));
    align::AlignTrainConfig tc;
    tc.steps = cfg.align_steps;
    tc.batch = cfg.align_batch;
    tc.lr = cfg.align_lr;
    tc.seed = Rng::derive(cfg.seed, 9);
    backbone::TrainCurve curve = align::train_alignment(model, prior, bb, tc, make_source(cfg));
    check_frozen(cfg, "backbone", bb.param_hash(), "alignment");
    check_frozen(cfg, "mae", params_hash(prior.params()), "alignment");
    Checkpoint ck = model.to_checkpoint(cfg.align_steps);
    ck.save(cfg.checkpoint_path("alignment"));
    write_provenance(cfg, "alignment", ck,
                     {{"variant", cfg.align_variant},
                      {"loss_head", curve.head_mean},
                      {"loss_tail", curve.tail_mean}});
    return cfg.checkpoint_path("alignment");
}

std::string stage_decoder(const RunConfig& cfg) {
    require_stage(cfg, "backbone", "decoder");
    backbone::Backbone bb =
        backbone::Backbone::from_checkpoint(Checkpoint::load(cfg.checkpoint_path("backbone")));
    check_profile(cfg, bb.vae().config().image_size, "backbone");
    check_frozen(cfg, "backbone", bb.param_hash(), "decoder");
    bb.freeze();

    dec::InpaintDecoder model(bb.vae(), bb.latent_scale(), Rng::derive(cfg.seed, 10));
    dec::DecoderTrainConfig tc;
    tc.steps = cfg.decoder_steps;
    tc.batch = cfg.decoder_batch;
    tc.lr = cfg.decoder_lr;
    tc.seed = Rng::derive(cfg.seed, 11);
    tc.masked_weight = cfg.decoder_masked_weight;
    backbone::TrainCurve curve = dec::train_decoder(model, bb, tc, make_source(cfg));
    check_frozen(cfg, "backbone", bb.param_hash(), "decoder");
    Checkpoint ck = model.to_checkpoint(cfg.decoder_steps);
    ck.save(cfg.checkpoint_path("decoder"));
    write_provenance(cfg, "decoder", ck,
                     {{"loss_head", curve.head_mean}, {"loss_tail", curve.tail_mean}});
    return cfg.checkpoint_path("decoder");
}

}  // namespace

std::string run_stage(const RunConfig& cfg, const std::string& stage) {
    cfg.validate();
    StageLock lock(cfg.out_dir);
    if (stage == "vae") return stage_vae(cfg);
    if (stage == "backbone") return stage_backbone(cfg);
    if (stage == "mae") return stage_mae(cfg);
    if (stage == "alignment") return stage_alignment(cfg);
    if (stage == "decoder") return stage_decoder(cfg);
    throw std::invalid_argument("unknown stage '" + stage +
                                "' (expected vae|backbone|mae|alignment|decoder)");
}

// ---- inference ----

namespace {

struct LoadedStack {
    backbone::Backbone bb;
    mae::MAE prior;
    align::Alignment alignment;
    dec::InpaintDecoder decoder;
    uint64_t bb_hash = 0, mae_hash = 0, align_hash = 0, dec_hash = 0;
};

LoadedStack load_stack(const RunConfig& cfg) {
    for (const char* s : {"backbone", "mae", "alignment", "decoder"})
        require_stage(cfg, s, "inpaint");
    Checkpoint cb = Checkpoint::load(cfg.checkpoint_path("backbone"));
    Checkpoint cm = Checkpoint::load(cfg.checkpoint_path("mae"));
    Checkpoint ca = Checkpoint::load(cfg.checkpoint_path("alignment"));
    Checkpoint cd = Checkpoint::load(cfg.checkpoint_path("decoder"));
    LoadedStack st{backbone::Backbone::from_checkpoint(cb), mae::MAE::from_checkpoint(cm),
                   align::Alignment::from_checkpoint(ca), dec::InpaintDecoder::from_checkpoint(cd),
                   cb.content_hash(), cm.content_hash(), ca.content_hash(), cd.content_hash()};
    check_profile(cfg, st.bb.vae().config().image_size, "backbone");
    check_profile(cfg, st.prior.config().image_size, "mae");
    check_profile(cfg, st.decoder.config().image_size, "decoder");
    st.bb.freeze();
    return st;
}

Tensor inpaint_one(const LoadedStack& st, const Tensor& image, const Tensor& mask,
                   const InpaintOptions& opt) {
    Tensor masked = img::apply_mask(image, mask);
    maskgen::PatchMask pm =
        align::prior_patch_mask(mask, st.prior.config().patch, /*full_image=*/false);
    Tensor prior = st.prior.extract_prior(masked, pm);
    Tensor cond = st.alignment.align(prior);
    Tensor z = st.bb.inpaint_latent(image, mask, &cond, opt.sampler);
    return st.decoder.decode_inpaint(z, masked, mask, opt.paste_unmasked);
}

}  // namespace

std::string inpaint(const RunConfig& cfg, const std::string& image_path,
                    const std::string& mask_path, const std::string& out_path,
                    const InpaintOptions& opt) {
    Tensor image = img::read_png(image_path);
    Tensor mask = img::read_mask_png(mask_path);
    if (mask.dim(0) != image.dim(1) || mask.dim(1) != image.dim(2))
        throw std::invalid_argument("inpaint: mask " + shape_str(mask.dims()) +
                                    " does not match image " + shape_str(image.dims()));
    if (image.dim(1) != cfg.image_size || image.dim(2) != cfg.image_size)
        throw std::invalid_argument("inpaint: image must be " + std::to_string(cfg.image_size) +
                                    "^2 for this run profile, got " + shape_str(image.dims()));

    LoadedStack st = load_stack(cfg);
    Tensor out = inpaint_one(st, image, mask, opt);
    img::write_png(out_path, out);
    json j = {{"image", image_path},
              {"mask", mask_path},
              {"seed", opt.sampler.seed},
              {"sampler_steps", opt.sampler.num_steps},
              {"eta", opt.sampler.eta},
              {"paste_unmasked", opt.paste_unmasked},
              {"checkpoint_hashes",
               {{"backbone", st.bb_hash},
                {"mae", st.mae_hash},
                {"alignment", st.align_hash},
                {"decoder", st.dec_hash}}}};
    std::ofstream(out_path + ".json") << j.dump(2) << "\n";
    return out_path;
}

// ---- ablations ----

namespace {

void write_ablation_report(const RunConfig& cfg, const AblationReport& rep) {
    json rows = json::array();
    for (const auto& r : rep.rows) rows.push_back({{"name", r.name}, {"metrics", r.metrics}});
    json j = {{"preset", rep.preset}, {"seed", rep.seed}, {"rows", rows}};
    fs::path base = fs::path(cfg.out_dir) / ("ablate_" + rep.preset);
    std::ofstream(base.string() + ".json") << j.dump(2) << "\n";

    std::ofstream csv(base.string() + ".csv");
    csv << "name";
    if (!rep.rows.empty())
        for (const auto& [k, v] : rep.rows.front().metrics) csv << "," << k;
    csv << "\n";
    for (const auto& r : rep.rows) {
        csv << r.name;
        for (const auto& [k, v] : r.metrics) csv << "," << v;
        csv << "\n";
    }
}

AblationReport ablate_alignment(const RunConfig& cfg) {
    require_stage(cfg, "backbone", "ablate");
    require_stage(cfg, "mae", "ablate");
    AblationReport rep{"alignment", cfg.seed, {}};
    for (const std::string& variant : {"linear_only", "attn1", "cross_x4", "self_x4"}) {
        backbone::Backbone bb =
            backbone::Backbone::from_checkpoint(Checkpoint::load(cfg.checkpoint_path("backbone")));
        mae::MAE prior = mae::MAE::from_checkpoint(Checkpoint::load(cfg.checkpoint_path("mae")));
        check_frozen(cfg, "backbone", bb.param_hash(), "ablate");

        align::AlignmentConfig acfg = cfg.align_config();
        acfg.variant = variant;
        // identical init/train seeds and data across variants
        align::Alignment model(acfg, Rng::derive(cfg.seed, 8));
        align::AlignTrainConfig tc;
        tc.steps = cfg.align_steps;
        tc.batch = cfg.align_batch;
        tc.lr = cfg.align_lr;
        tc.seed = Rng::derive(cfg.seed, 9);
        backbone::TrainCurve curve = align::train_alignment(model, prior, bb, tc, make_source(cfg));
        rep.rows.push_back({variant,
                            {{"loss_head", curve.head_mean},
                             {"loss_tail", curve.tail_mean},
                             {"seed", static_cast<double>(tc.seed)}}});
    }
    write_ablation_report(cfg, rep);
    return rep;
}

AblationReport ablate_decoder(const RunConfig& cfg) {
    require_stage(cfg, "backbone", "ablate");
    backbone::Backbone bb =
        backbone::Backbone::from_checkpoint(Checkpoint::load(cfg.checkpoint_path("backbone")));
    check_frozen(cfg, "backbone", bb.param_hash(), "ablate");
    bb.freeze();

    auto train_variant = [&](bool color_aug, bool latent_aug) {
        dec::InpaintDecoder model(bb.vae(), bb.latent_scale(), Rng::derive(cfg.seed, 10));
        if (!color_aug && !latent_aug) return model;  // vanilla: untouched copy
        dec::DecoderTrainConfig tc;
        tc.steps = cfg.decoder_steps;
        tc.batch = cfg.decoder_batch;
        tc.lr = cfg.decoder_lr;
        tc.seed = Rng::derive(cfg.seed, 11);
        tc.masked_weight = cfg.decoder_masked_weight;
        tc.color_aug = color_aug;
        tc.latent_aug = latent_aug;
        dec::train_decoder(model, bb, tc, make_source(cfg));
        return model;
    };
    std::vector<std::pair<std::string, dec::InpaintDecoder>> variants;
    variants.emplace_back("vanilla", train_variant(false, false));
    variants.emplace_back("color_aug_only", train_variant(true, false));
    variants.emplace_back("full", train_variant(true, true));

    // held-out images with realistically degraded latents
    AblationReport rep{"decoder", cfg.seed, {}};
    const int n_eval = 16;
    dec::LatentAugmentConfig la;
    std::vector<std::map<std::string, double>> sums(variants.size());
    for (int i = 0; i < n_eval; ++i) {
        uint64_t s = Rng::derive(cfg.seed, 0xeba1ULL + static_cast<uint64_t>(i));
        Tensor image = data::toy_image(s, cfg.image_size);
        Rng mrng(Rng::derive(s, 1));
        Tensor mask =
            maskgen::sample_training_mask({}, mrng, cfg.image_size, cfg.image_size, nullptr);
        Rng arng(Rng::derive(s, 2));
        Tensor z = dec::latent_augment(image, bb, arng, la);
        Tensor masked = img::apply_mask(image, mask);
        for (size_t v = 0; v < variants.size(); ++v) {
            Tensor out = variants[v].second.decode_inpaint(z, masked, mask);
            sums[v]["masked_color_error"] +=
                dec::masked_mean_color_error(out, image, mask) / n_eval;
            Tensor inv_mask(mask.dims(), 1.0 - mask.array());
            Tensor out_u = img::apply_mask(img::to_unit(out), inv_mask);
            Tensor gt_u = img::apply_mask(img::to_unit(image), inv_mask);
            double n_vis = 3.0 * (mask.numel() - mask.array().sum());
            double mse = (out_u.array() - gt_u.array()).square().sum() / std::max(n_vis, 1.0);
            sums[v]["unmasked_psnr"] +=
                (mse <= 0 ? 99.0 : std::min(99.0, 10.0 * std::log10(1.0 / mse))) / n_eval;
        }
    }
    for (size_t v = 0; v < variants.size(); ++v) {
        sums[v]["seed"] = static_cast<double>(Rng::derive(cfg.seed, 11));
        rep.rows.push_back({variants[v].first, sums[v]});
    }
    write_ablation_report(cfg, rep);
    return rep;
}

}  // namespace

AblationReport ablate(const RunConfig& cfg, const std::string& preset) {
    cfg.validate();
    StageLock lock(cfg.out_dir);
    if (preset == "alignment") return ablate_alignment(cfg);
    if (preset == "decoder") return ablate_decoder(cfg);
    throw std::invalid_argument("unknown ablation preset '" + preset +
                                "' (expected alignment|decoder)");
}

// ---- benchmark ----

met::MetricReport benchmark(const RunConfig& cfg, int per_source_k, const std::string& bench_dir) {
    cfg.validate();
    StageLock lock(cfg.out_dir);
    LoadedStack st = load_stack(cfg);

    // procedural eval pool: each toy style acts as one source
    std::vector<cur::Source> sources;
    int pool = std::max(3 * per_source_k, per_source_k + 4);
    for (int style = 0; style < data::kNumStyles; ++style) {
        cur::Source src;
        src.name = "style" + std::to_string(style);
        for (int i = 0; i < pool; ++i)
            src.images.push_back(data::toy_image(
                Rng::derive(cfg.seed, 0xbe7cULL + static_cast<uint64_t>(style * pool + i)),
                cfg.image_size, style));
        sources.push_back(std::move(src));
    }
    cur::EvalSetConfig ec;
    ec.per_source_k = per_source_k;
    ec.size = cfg.image_size;
    ec.seed = Rng::derive(cfg.seed, 0xc0a7ULL);
    ec.out_dir = (fs::path(bench_dir) / "eval_set").string();
    std::vector<cur::EvalRecord> manifest = cur::build_eval_set(sources, ec);

    fs::path out_dir = fs::path(bench_dir) / "outputs";
    fs::create_directories(out_dir);
    InpaintOptions opt;
    opt.sampler = cfg.sampler;
    for (const auto& rec : manifest) {
        Tensor image = img::read_png(rec.image_path);
        Tensor mask = img::read_mask_png(rec.mask_path);
        Tensor out = inpaint_one(st, image, mask, opt);
        img::write_png((out_dir / fs::path(rec.image_path).filename()).string(), out);
    }

    met::FeatNet fn = met::make_random_featnet(Rng::derive(cfg.seed, 0xfee7ULL));
    met::MetricReport report = met::evaluate(manifest, out_dir.string(), fn);
    met::write_report_json((fs::path(bench_dir) / "report.json").string(), report);
    met::write_report_csv((fs::path(bench_dir) / "report.csv").string(), report);
    return report;
}

}  // namespace patchwork::pipe
