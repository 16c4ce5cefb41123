#pragma once

#include <cmath>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "hcm/data/dataset.hpp"
#include "hcm/engine/config.hpp"
#include "hcm/engine/serialize.hpp"
#include "hcm/losses.hpp"
#include "hcm/metrics.hpp"
#include "hcm/model/segmenter.hpp"
#include "hcm/nn/adam.hpp"

namespace hcm::engine {

struct StepLog {
    int64_t epoch = 0;
    int64_t step = 0;  // global optimizer step
    double total = 0.0;
    std::array<losses::LevelLoss, 5> levels;
};

struct EpochLog {
    int64_t epoch = 0;
    double mean_loss = 0.0;
};

/// Owns the model, optimizer and schedule; drives training, evaluation,
/// prediction export and checkpointing.
class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        seed_all(cfg_.seed);
        SegmenterOptions opts;
        opts.width = cfg_.decoder_width;
        opts.use_isc = cfg_.use_isc;
        opts.use_csc = cfg_.use_csc;
        opts.use_rrd = cfg_.use_rrd;
        model_ = std::make_unique<HcmSegmenter>(opts);
        if (!cfg_.backbone_weights.empty()) load_backbone(cfg_.backbone_weights);
        opt_ = std::make_unique<nn::Adam>(model_->parameters(), cfg_.lr0, cfg_.beta1, cfg_.beta2,
                                          1e-8, cfg_.weight_decay);
    }

    const TrainConfig& config() const { return cfg_; }
    /// For schedule adjustments after a checkpoint reload (e.g. extending
    /// the epoch budget before resuming).
    TrainConfig& mutable_config() { return cfg_; }
    HcmSegmenter& model() { return *model_; }
    nn::Adam& optimizer() { return *opt_; }
    int64_t epoch() const { return epoch_; }
    int64_t global_step() const { return global_step_; }
    const std::vector<StepLog>& step_logs() const { return step_logs_; }
    const std::vector<EpochLog>& history() const { return history_; }
    bool verbose = false;

    /// One optimizer step on an assembled batch. Aborts on non-finite loss.
    StepLog step(const Tensor& images, const Tensor& masks, int64_t batch_index = 0) {
        model_->train(true);
        opt_->set_lr(cfg_.lr_at(epoch_));
        opt_->zero_grad();
        PredictionPyramid preds = model_->forward(Var(images));
        losses::TotalLoss loss = losses::total_loss(preds, masks);
        if (!std::isfinite(loss.value()))
            throw TrainAbort("non-finite loss at epoch " + std::to_string(epoch_) + ", batch " +
                             std::to_string(batch_index));
        loss.total.backward();
        opt_->step();
        ++global_step_;
        StepLog log{epoch_, global_step_, loss.value(), loss.levels};
        step_logs_.push_back(log);
        if (verbose) {
            std::cout << "epoch " << epoch_ << " step " << global_step_ << " lr "
                      << cfg_.lr_at(epoch_) << " loss " << loss.value();
            for (int s = 0; s < 5; ++s)
                std::cout << "  L" << s + 1 << " bce " << loss.levels[s].bce << " iou "
                          << loss.levels[s].iou;
            std::cout << "\n";
        }
        return log;
    }

    /// Full training run over the manifest. Returns the last checkpoint path
    /// (empty when checkpointing is disabled via an empty checkpoint_dir).
    std::string run(const data::DatasetManifest& manifest) {
        HCM_CHECK(!manifest.records.empty(), "train: empty manifest");
        std::string last;
        std::mt19937_64 aug_rng(cfg_.seed ^ 0x5deece66dULL);
        while (epoch_ < cfg_.epochs) {
            double acc = 0.0;
            int64_t steps = 0;
            auto batches =
                data::make_batches(manifest, cfg_.batch_size, cfg_.seed + static_cast<uint64_t>(epoch_), true);
            if (batches.empty())  // fewer records than the batch size: keep the tail
                batches = data::make_batches(manifest, cfg_.batch_size, cfg_.seed, false);
            for (size_t bi = 0; bi < batches.size(); ++bi) {
                auto [images, masks] = assemble(manifest, batches[bi], aug_rng);
                StepLog log = step(images, masks, static_cast<int64_t>(bi));
                acc += log.total;
                ++steps;
                if (cfg_.max_steps > 0 && global_step_ >= cfg_.max_steps) break;
            }
            history_.push_back({epoch_, steps ? acc / static_cast<double>(steps) : 0.0});
            ++epoch_;  // checkpoints record completed epochs, so resume continues here
            if (!cfg_.checkpoint_dir.empty()) last = save_epoch_checkpoint();
            if (cfg_.max_steps > 0 && global_step_ >= cfg_.max_steps) break;
        }
        return last;
    }

    /// Scores sigmoid(p1), upsampled to each ground truth's native size.
    metrics::MetricsReport evaluate(const data::DatasetManifest& manifest) {
        NoGradGuard ng;
        model_->train(false);
        std::vector<metrics::PerImageScores> scores;
        for (const auto& rec : manifest.records) {
            auto sample = data::preprocess(rec, cfg_.input_size);
            if (!sample) {
                std::cerr << "warning: skipping undecodable sample " << rec.stem << "\n";
                continue;
            }
            Tensor score = predict_map(sample->image, sample->native_h, sample->native_w);
            Tensor gt = sample->native_mask.reshape({sample->native_h, sample->native_w});
            scores.push_back(metrics::score_pair(score, gt));
        }
        return metrics::aggregate(scores);
    }

    /// sigmoid(p1) for one preprocessed image, upsampled to (h, w), in [0,1].
    Tensor predict_map(const Tensor& image, int64_t h, int64_t w) {
        NoGradGuard ng;
        model_->train(false);
        PredictionPyramid preds = model_->forward(Var(image));
        Tensor prob = sigmoid_map(preds.finest().value());
        Tensor up = bilinear_resize(prob, h, w);
        return clamp01(up).reshape({h, w});
    }

    void save(const std::string& path) {
        std::filesystem::path p(path);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        std::ofstream os(path, std::ios::binary);
        if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
        os.write("HCMCKPT1", 8);
        detail::write_pod<uint32_t>(os, 1);  // checkpoint schema
        detail::write_string(os, cfg_.to_text());
        detail::write_pod<int64_t>(os, epoch_);
        detail::write_pod<int64_t>(os, global_step_);

        std::vector<std::pair<std::string, Tensor>> params;
        for (auto& [name, p2] : model_->named_parameters()) params.emplace_back(name, p2->value());
        write_tensor_map(os, params);
        std::vector<std::pair<std::string, Tensor>> buffers;
        for (auto& [name, b] : model_->named_buffers()) buffers.emplace_back(name, *b);
        write_tensor_map(os, buffers);

        detail::write_pod<int64_t>(os, opt_->step_count());
        std::vector<std::pair<std::string, Tensor>> mstate, vstate;
        auto named = model_->named_parameters();
        for (size_t i = 0; i < named.size(); ++i) {
            mstate.emplace_back(named[i].first, opt_->slots()[i].m);
            vstate.emplace_back(named[i].first, opt_->slots()[i].v);
        }
        write_tensor_map(os, mstate);
        write_tensor_map(os, vstate);

        detail::write_pod<uint64_t>(os, history_.size());
        for (const auto& h : history_) {
            detail::write_pod<int64_t>(os, h.epoch);
            detail::write_pod<double>(os, h.mean_loss);
        }
        if (!os) throw DataError("checkpoint: write failed for " + path);
    }

    static Trainer load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw DataError("checkpoint: cannot open " + path);
        char magic[8];
        is.read(magic, 8);
        if (std::memcmp(magic, "HCMCKPT1", 8) != 0)
            throw DataError("checkpoint: " + path + " is not a checkpoint file");
        uint32_t schema = 0;
        detail::read_pod(is, schema);
        if (schema != 1)
            throw DataError("checkpoint: unsupported schema " + std::to_string(schema));
        TrainConfig cfg = TrainConfig::from_text(detail::read_string(is));
        Trainer t(cfg);
        detail::read_pod(is, t.epoch_);
        detail::read_pod(is, t.global_step_);

        auto params = read_tensor_map(is);
        for (auto& [name, p] : t.model_->named_parameters()) {
            auto it = params.find(name);
            if (it == params.end()) throw DataError("checkpoint: missing parameter " + name);
            HCM_CHECK(it->second.same_shape(p->value()),
                      "checkpoint: shape mismatch for " + name);
            p->value() = it->second;
        }
        auto buffers = read_tensor_map(is);
        for (auto& [name, b] : t.model_->named_buffers()) {
            auto it = buffers.find(name);
            if (it == buffers.end()) throw DataError("checkpoint: missing buffer " + name);
            *b = it->second;
        }
        // Rebind optimizer slots (parameters were re-seated above).
        t.opt_ = std::make_unique<nn::Adam>(t.model_->parameters(), cfg.lr0, cfg.beta1, cfg.beta2,
                                            1e-8, cfg.weight_decay);
        int64_t opt_step = 0;
        detail::read_pod(is, opt_step);
        auto mstate = read_tensor_map(is);
        auto vstate = read_tensor_map(is);
        auto named = t.model_->named_parameters();
        for (size_t i = 0; i < named.size(); ++i) {
            auto mi = mstate.find(named[i].first);
            auto vi = vstate.find(named[i].first);
            if (mi == mstate.end() || vi == vstate.end())
                throw DataError("checkpoint: missing optimizer state for " + named[i].first);
            t.opt_->slots()[i].m = mi->second;
            t.opt_->slots()[i].v = vi->second;
        }
        t.opt_->set_step_count(opt_step);

        uint64_t nh = 0;
        detail::read_pod(is, nh);
        for (uint64_t i = 0; i < nh; ++i) {
            EpochLog h;
            detail::read_pod(is, h.epoch);
            detail::read_pod(is, h.mean_loss);
            t.history_.push_back(h);
        }
        if (!is) throw DataError("checkpoint: truncated file " + path);
        return t;
    }

    /// Copies matching backbone tensors from a weight file; anything else in
    /// the model keeps its random initialization.
    void load_backbone(const std::string& path) {
        auto weights = load_weights(path);
        int64_t matched = 0;
        for (auto& [name, p] : model_->named_parameters()) {
            if (name.rfind("encoder.backbone.", 0) != 0) continue;
            auto it = weights.find(name);
            if (it == weights.end()) continue;
            HCM_CHECK(it->second.same_shape(p->value()),
                      "backbone weights: shape mismatch for " + name);
            p->value() = it->second.clone();
            ++matched;
        }
        for (auto& [name, b] : model_->named_buffers()) {
            if (name.rfind("encoder.backbone.", 0) != 0) continue;
            auto it = weights.find(name);
            if (it == weights.end()) continue;
            *b = it->second.clone();
        }
        if (matched == 0)
            throw DataError("backbone weights: no matching tensors in " + path);
    }

private:
    std::pair<Tensor, Tensor> assemble(const data::DatasetManifest& manifest,
                                       const data::Batch& batch, std::mt19937_64& aug_rng) {
        const int64_t S = cfg_.input_size;
        Tensor images({static_cast<int64_t>(batch.size()), 3, S, S});
        Tensor masks({static_cast<int64_t>(batch.size()), 1, S, S});
        int64_t bi = 0;
        for (size_t idx : batch) {
            auto sample = data::preprocess(manifest.records[idx], S);
            if (!sample) {
                std::cerr << "warning: skipping undecodable sample "
                          << manifest.records[idx].stem << "\n";
                continue;
            }
            Tensor img = sample->image, msk = sample->mask;
            if (cfg_.augment_hflip && std::uniform_real_distribution<double>(0, 1)(aug_rng) < 0.5) {
                img = data::hflip(img);
                msk = data::hflip(msk);
            }
            std::memcpy(images.data() + bi * 3 * S * S, img.data(),
                        static_cast<size_t>(3 * S * S) * sizeof(double));
            std::memcpy(masks.data() + bi * S * S, msk.data(),
                        static_cast<size_t>(S * S) * sizeof(double));
            ++bi;
        }
        HCM_CHECK(bi > 0, "train: entire batch was undecodable");
        if (bi < static_cast<int64_t>(batch.size())) {
            // Samples were packed densely; shrink the batch dim.
            Tensor imgs2({bi, 3, S, S}), msks2({bi, 1, S, S});
            std::memcpy(imgs2.data(), images.data(), static_cast<size_t>(bi * 3 * S * S) * sizeof(double));
            std::memcpy(msks2.data(), masks.data(), static_cast<size_t>(bi * S * S) * sizeof(double));
            return {imgs2, msks2};
        }
        return {images, masks};
    }

    std::string save_epoch_checkpoint() {
        const std::string last =
            (std::filesystem::path(cfg_.checkpoint_dir) / "last.ckpt").string();
        save(last);
        return last;
    }

    TrainConfig cfg_;
    std::unique_ptr<HcmSegmenter> model_;
    std::unique_ptr<nn::Adam> opt_;
    int64_t epoch_ = 0;
    int64_t global_step_ = 0;
    std::vector<StepLog> step_logs_;
    std::vector<EpochLog> history_;
};

}  // namespace hcm::engine
