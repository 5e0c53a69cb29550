// Copyright (C) 2026 the patchwork authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "patchwork/dataset.hpp"
#include "patchwork/image.hpp"
#include "patchwork/pipeline.hpp"

namespace fs = std::filesystem;
using namespace patchwork;

namespace {

// shared run-configuration plumbing: config files, key=value overrides, and
// the PATCHWORK_OUT_ROOT default output root
struct CommonOpts {
    std::vector<std::string> config_files;
    std::vector<std::string> overrides;
    std::string out_dir;
    long long seed = -1;

    void attach(CLI::App* app) {
        app->add_option("--config", config_files, "key = value config file (repeatable)");
        app->add_option("--set", overrides, "override, e.g. --set vae.steps=100 (repeatable)");
        app->add_option("--out-dir", out_dir, "run directory for checkpoints and reports");
        app->add_option("--seed", seed, "global run seed");
    }

    pipe::RunConfig run_config() const {
        KvConfig kv;
        if (const char* root = std::getenv("PATCHWORK_OUT_ROOT"))
            kv.set("out_dir", (fs::path(root) / "default").string());
        for (const auto& f : config_files) kv.merge_file(f);
        for (const auto& o : overrides) kv.merge_override(o);
        if (!out_dir.empty()) kv.set("out_dir", out_dir);
        if (seed >= 0) kv.set("seed", std::to_string(seed));
        return pipe::RunConfig::from_kv(kv);
    }
};

int run_training_stage(const CommonOpts& common, const std::string& stage) {
    std::string path = pipe::run_stage(common.run_config(), stage);
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

std::vector<Tensor> load_folder(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    std::vector<Tensor> images;
    for (const auto& f : files) images.push_back(img::read_png(f));
    return images;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patchwork: latent-diffusion image inpainting toolkit"};
    app.require_subcommand(1);

    struct {
        CommonOpts common;
    } vae, backbone, mae, align, decoder;
    CommonOpts ablate_common, bench_common;

    app.add_subcommand("train-vae", "train the KL-regularized autoencoder")->callback([&] {
        std::exit(run_training_stage(vae.common, "vae"));
    });
    app.add_subcommand("train-backbone", "train the latent noise-prediction U-Net")->callback([&] {
        std::exit(run_training_stage(backbone.common, "backbone"));
    });
    app.add_subcommand("finetune-mae",
                       "pretrain + inpainting-finetune the masked autoencoder prior")
        ->callback([&] { std::exit(run_training_stage(mae.common, "mae")); });
    app.add_subcommand("train-alignment",
                       "train the prior-to-condition adapter against the frozen stack")
        ->callback([&] { std::exit(run_training_stage(align.common, "alignment")); });
    app.add_subcommand("train-decoder", "train the pixel-conditioned inpainting decoder")
        ->callback([&] { std::exit(run_training_stage(decoder.common, "decoder")); });
    vae.common.attach(app.get_subcommand("train-vae"));
    backbone.common.attach(app.get_subcommand("train-backbone"));
    mae.common.attach(app.get_subcommand("finetune-mae"));
    align.common.attach(app.get_subcommand("train-alignment"));
    decoder.common.attach(app.get_subcommand("train-decoder"));

    // maskgen
    auto* mg = app.add_subcommand("maskgen", "sample masks from the training or eval mixture");
    struct {
        std::string out = "masks";
        int n = 16, height = 64, width = 64;
        uint64_t seed = 0;
        bool eval = false;
    } mgo;
    mg->add_option("--out", mgo.out, "output directory");
    mg->add_option("-n", mgo.n, "number of masks");
    mg->add_option("--height", mgo.height);
    mg->add_option("--width", mgo.width);
    mg->add_option("--seed", mgo.seed);
    mg->add_flag("--eval", mgo.eval, "use the evaluation mixture (no rectangles)");
    mg->callback([&] {
        fs::create_directories(mgo.out);
        maskgen::MaskMixtureConfig mcfg;
        for (int i = 0; i < mgo.n; ++i) {
            Rng rng(Rng::derive(mgo.seed, static_cast<uint64_t>(i)));
            Tensor m = mgo.eval
                           ? maskgen::sample_eval_mask(rng, mgo.height, mgo.width)
                           : maskgen::sample_training_mask(mcfg, rng, mgo.height, mgo.width);
            std::string path = (fs::path(mgo.out) / ("mask_" + std::to_string(i) + ".png")).string();
            img::write_mask_png(path, m);
            std::printf("%s ratio=%.3f\n", path.c_str(), maskgen::mask_ratio(m));
        }
        std::exit(0);
    });

    // curate
    auto* cu = app.add_subcommand("curate", "build an evaluation set from image folders");
    struct {
        std::vector<std::string> sources;
        int k = 25, size = 64;
        uint64_t seed = 0;
        std::string out = "eval_set";
    } cuo;
    cu->add_option("--sources", cuo.sources, "image folders, one source each (PNG contents)");
    cu->add_option("--k", cuo.k, "representatives per source");
    cu->add_option("--size", cuo.size, "output resolution");
    cu->add_option("--seed", cuo.seed);
    cu->add_option("--out", cuo.out, "output directory");
    cu->callback([&] {
        std::vector<cur::Source> sources;
        if (cuo.sources.empty()) {
            // no folders given: fall back to the procedural styles
            for (int style = 0; style < data::kNumStyles; ++style) {
                cur::Source src;
                src.name = "style" + std::to_string(style);
                for (int i = 0; i < 3 * cuo.k; ++i)
                    src.images.push_back(data::toy_image(
                        Rng::derive(cuo.seed, static_cast<uint64_t>(style * 3 * cuo.k + i)),
                        cuo.size, style));
                sources.push_back(std::move(src));
            }
        } else {
            for (const auto& dir : cuo.sources) {
                cur::Source src;
                src.name = fs::path(dir).filename().string();
                src.images = load_folder(dir);
                sources.push_back(std::move(src));
            }
        }
        cur::EvalSetConfig ec;
        ec.per_source_k = cuo.k;
        ec.size = cuo.size;
        ec.seed = cuo.seed;
        ec.out_dir = cuo.out;
        auto recs = cur::build_eval_set(sources, ec);
        std::printf("wrote %zu records to %s\n", recs.size(), cuo.out.c_str());
        std::exit(0);
    });

    // inpaint
    auto* ip = app.add_subcommand("inpaint", "fill the masked region of one image");
    struct {
        CommonOpts common;
        std::string image, mask, out = "inpainted.png";
        int steps = 50;
        double eta = 0.0;
        uint64_t sample_seed = 0;
        bool paste = false;
    } ipo;
    ipo.common.attach(ip);
    ip->add_option("--image", ipo.image, "input PNG")->required();
    ip->add_option("--mask", ipo.mask, "mask PNG (white = fill)")->required();
    ip->add_option("--out", ipo.out, "output PNG");
    ip->add_option("--steps", ipo.steps, "sampler steps");
    ip->add_option("--eta", ipo.eta, "sampler stochasticity (0 = deterministic)");
    ip->add_option("--sample-seed", ipo.sample_seed, "sampler noise seed");
    ip->add_flag("--paste-unmasked", ipo.paste, "copy unmasked input pixels into the output");
    ip->callback([&] {
        pipe::InpaintOptions opt;
        opt.sampler.num_steps = ipo.steps;
        opt.sampler.eta = ipo.eta;
        opt.sampler.seed = ipo.sample_seed;
        opt.paste_unmasked = ipo.paste;
        std::string out = pipe::inpaint(ipo.common.run_config(), ipo.image, ipo.mask, ipo.out, opt);
        std::printf("wrote %s\n", out.c_str());
        std::exit(0);
    });

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score method outputs against an eval set");
    struct {
        std::string manifest, outputs, report_dir = ".";
        uint64_t featnet_seed = 0;
    } evo;
    ev->add_option("--manifest", evo.manifest, "manifest.jsonl from curate")->required();
    ev->add_option("--outputs", evo.outputs, "directory of method output PNGs")->required();
    ev->add_option("--report-dir", evo.report_dir, "where report.json/report.csv go");
    ev->add_option("--featnet-seed", evo.featnet_seed, "perceptual feature extractor seed");
    ev->callback([&] {
        auto manifest = cur::read_manifest(evo.manifest);
        met::FeatNet fn = met::make_random_featnet(evo.featnet_seed);
        met::MetricReport r = met::evaluate(manifest, evo.outputs, fn);
        fs::create_directories(evo.report_dir);
        met::write_report_json((fs::path(evo.report_dir) / "report.json").string(), r);
        met::write_report_csv((fs::path(evo.report_dir) / "report.csv").string(), r);
        std::printf("PSNR %.3f SSIM %.4f LPIPS %.4f FID %.4f U-IDS %.3f P-IDS %.3f (n=%d%s)\n",
                    r.psnr, r.ssim, r.lpips, r.fid, r.u_ids, r.p_ids, r.n_samples,
                    r.complete ? "" : ", INCOMPLETE");
        std::exit(r.complete ? 0 : 1);
    });

    // ablate
    auto* ab = app.add_subcommand("ablate", "train and compare preset variant sets");
    std::string preset = "alignment";
    ablate_common.attach(ab);
    ab->add_option("--preset", preset, "alignment | decoder");
    ab->callback([&] {
        pipe::AblationReport rep = pipe::ablate(ablate_common.run_config(), preset);
        for (const auto& row : rep.rows) {
            std::printf("%-16s", row.name.c_str());
            for (const auto& [k, v] : row.metrics) std::printf(" %s=%.5f", k.c_str(), v);
            std::printf("\n");
        }
        std::exit(0);
    });

    // benchmark
    auto* bm = app.add_subcommand("benchmark",
                                  "curate a procedural eval set, inpaint it, and report metrics");
    struct {
        int k = 25;
        std::string dir = "bench";
    } bmo;
    bench_common.attach(bm);
    bm->add_option("--k", bmo.k, "records per procedural source");
    bm->add_option("--bench-dir", bmo.dir, "benchmark working directory");
    bm->callback([&] {
        met::MetricReport r = pipe::benchmark(bench_common.run_config(), bmo.k, bmo.dir);
        std::printf("PSNR %.3f SSIM %.4f LPIPS %.4f FID %.4f U-IDS %.3f P-IDS %.3f (n=%d)\n",
                    r.psnr, r.ssim, r.lpips, r.fid, r.u_ids, r.p_ids, r.n_samples);
        std::exit(0);
    });

    try {
        CLI11_PARSE(app, argc, argv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
