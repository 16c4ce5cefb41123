// Command-line front end: train, eval, predict and score subcommands.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hcm/hcm.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    int64_t seed = -1;
};

hcm::engine::TrainConfig build_config(const CommonArgs& args, bool require_file) {
    hcm::engine::TrainConfig cfg;
    if (!args.config_path.empty()) {
        cfg = hcm::engine::TrainConfig::from_file(args.config_path);
    } else if (require_file) {
        throw hcm::ConfigError("missing --config");
    }
    for (const std::string& kv : args.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw hcm::ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set_key(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
    cfg.validate();
    return cfg;
}

int cmd_train(const CommonArgs& args) {
    auto cfg = build_config(args, true);
    if (cfg.data_root.empty()) throw hcm::ConfigError("config: data_root is required for train");
    auto manifest = hcm::data::scan(cfg.data_root, cfg.train_split);
    for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << "\n";
    hcm::engine::Trainer trainer(cfg);
    trainer.verbose = true;
    const std::string last = trainer.run(manifest);
    if (!last.empty()) std::cout << "checkpoint: " << last << "\n";
    return 0;
}

hcm::engine::Trainer load_trainer(const hcm::engine::TrainConfig& cfg) {
    if (cfg.checkpoint.empty())
        throw hcm::ConfigError("config: key 'checkpoint' is required but missing");
    if (!fs::exists(cfg.checkpoint))
        throw hcm::ConfigError("config: checkpoint file does not exist: " + cfg.checkpoint);
    auto trainer = hcm::engine::Trainer::load(cfg.checkpoint);
    return trainer;
}

int cmd_eval(const CommonArgs& args, const std::string& out_path) {
    auto cfg = build_config(args, true);
    if (cfg.data_root.empty()) throw hcm::ConfigError("config: data_root is required for eval");
    auto trainer = load_trainer(cfg);
    auto manifest = hcm::data::scan(cfg.data_root, cfg.eval_split);
    auto report = trainer.evaluate(manifest);
    std::cout << cfg.eval_split << " (" << report.n_images << " images)\n"
              << report.to_table();
    if (!out_path.empty()) {
        std::ofstream os(out_path);
        os << report.to_kv();
    }
    return 0;
}

int cmd_predict(const CommonArgs& args, const std::string& out_dir) {
    auto cfg = build_config(args, true);
    if (cfg.data_root.empty())
        throw hcm::ConfigError("config: data_root is required for predict");
    if (out_dir.empty()) throw hcm::ConfigError("predict: --out directory is required");
    auto trainer = load_trainer(cfg);
    auto manifest = hcm::data::scan(cfg.data_root, cfg.eval_split);
    fs::create_directories(out_dir);
    int64_t written = 0;
    for (const auto& rec : manifest.records) {
        auto sample = hcm::data::preprocess(rec, cfg.input_size);
        if (!sample) {
            std::cerr << "warning: skipping undecodable sample " << rec.stem << "\n";
            continue;
        }
        hcm::Tensor map =
            trainer.predict_map(sample->image, sample->native_h, sample->native_w);
        const std::string path = (fs::path(out_dir) / (rec.stem + ".png")).string();
        if (!hcm::data::save_gray_png(path, map))
            throw hcm::DataError("predict: failed to write " + path);
        ++written;
    }
    std::cout << "wrote " << written << " prediction maps to " << out_dir << "\n";
    return 0;
}

int cmd_score(const std::string& pred_dir, const std::string& gt_dir,
              const std::string& out_path) {
    if (!fs::is_directory(pred_dir)) throw hcm::DataError("score: not a directory: " + pred_dir);
    if (!fs::is_directory(gt_dir)) throw hcm::DataError("score: not a directory: " + gt_dir);

    std::map<std::string, fs::path> preds, gts;
    for (const auto& e : fs::directory_iterator(pred_dir))
        if (e.is_regular_file()) preds[e.path().stem().string()] = e.path();
    for (const auto& e : fs::directory_iterator(gt_dir))
        if (e.is_regular_file()) gts[e.path().stem().string()] = e.path();

    std::vector<hcm::metrics::PerImageScores> scores;
    for (const auto& [stem, ppath] : preds) {
        auto it = gts.find(stem);
        if (it == gts.end()) {
            std::cerr << "warning: prediction without ground truth: " << stem << "\n";
            continue;
        }
        auto s = hcm::data::load_gray(ppath.string());
        auto y = hcm::data::load_gray(it->second.string());
        if (!s || !y) {
            std::cerr << "warning: undecodable pair: " << stem << "\n";
            continue;
        }
        const int64_t h = y->dim(2), w = y->dim(3);
        hcm::Tensor sm = hcm::clamp01(hcm::bilinear_resize(*s, h, w)).reshape({h, w});
        hcm::Tensor gt({h, w});
        for (int64_t i = 0; i < gt.numel(); ++i) gt[i] = (*y)[i] > 0.5 ? 1.0 : 0.0;
        scores.push_back(hcm::metrics::score_pair(sm, gt));
    }
    if (scores.empty()) throw hcm::DataError("score: no matching prediction/mask pairs");
    auto report = hcm::metrics::aggregate(scores);
    std::cout << report.to_table();
    if (!out_path.empty()) {
        std::ofstream os(out_path);
        os << report.to_kv();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concealed object segmentation: training, evaluation and scoring"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string out_path, pred_dir, gt_dir;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "run configuration file");
        sub->add_option("--set", common.overrides, "override: key=value (repeatable)");
        sub->add_option("--seed", common.seed, "override the config seed");
    };

    CLI::App* train = app.add_subcommand("train", "train a segmenter");
    add_common(train);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval);
    eval->add_option("--out", out_path, "write the metrics report to this file");
    CLI::App* predict = app.add_subcommand("predict", "export prediction maps as PNGs");
    add_common(predict);
    predict->add_option("--out", out_path, "output directory for PNG maps");
    CLI::App* score = app.add_subcommand("score", "score a prediction directory against masks");
    score->add_option("--pred", pred_dir, "directory of prediction maps")->required();
    score->add_option("--gt", gt_dir, "directory of ground-truth masks")->required();
    score->add_option("--out", out_path, "write the metrics report to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        if (app.got_subcommand(train)) return cmd_train(common);
        if (app.got_subcommand(eval)) return cmd_eval(common, out_path);
        if (app.got_subcommand(predict)) return cmd_predict(common, out_path);
        if (app.got_subcommand(score)) return cmd_score(pred_dir, gt_dir, out_path);
    } catch (const hcm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const hcm::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
