#pragma once

#include <array>
#include <memory>

#include "hcm/model/csc.hpp"
#include "hcm/model/encoder.hpp"
#include "hcm/model/isc.hpp"
#include "hcm/model/rrd.hpp"

namespace hcm {

struct SegmenterOptions {
    int64_t width = 64;  // decoder channel width C
    bool use_isc = true;
    bool use_csc = true;
    bool use_rrd = true;
};

/// Everything the forward pass produced, for tests and diagnostics.
struct ForwardTrace {
    FeaturePyramid pyramid;
    std::array<Var, 4> coherent;  // f_s^i, stages 1..4
    std::array<Var, 4> context;   // f_s^c, stages 1..4
    PredictionPyramid preds;
};

/// The full segmenter: encoder pyramid, per-stage intra-stage coherence,
/// cross-stage coherence, and the reversible re-calibration decoder. Each of
/// the three blocks can be ablated independently:
///  - without ISC, stages are reduced by a plain 1x1 projection;
///  - without CSC, the context feature is the stage feature itself;
///  - without RRD, per-stage 3x3 heads read the context features directly.
class HcmSegmenter : public nn::Module {
public:
    static constexpr std::array<int64_t, 4> kStageChannels = {256, 512, 1024, 2048};

    explicit HcmSegmenter(const SegmenterOptions& opts = {})
        : encoder(opts.width), opts_(opts) {
        register_module("encoder", encoder);
        for (int s = 0; s < 4; ++s) {
            const std::string tag = std::to_string(s + 1);
            if (opts_.use_isc) {
                isc[s] = std::make_unique<IscBlock>(kStageChannels[s], opts_.width);
                register_module("isc" + tag, *isc[s]);
            } else {
                proj[s] = std::make_unique<nn::Conv2d>(kStageChannels[s], opts_.width, 1);
                register_module("proj" + tag, *proj[s]);
            }
            if (opts_.use_csc) {
                csc[s] = std::make_unique<CscBlock>(opts_.width);
                register_module("csc" + tag, *csc[s]);
            }
            if (!opts_.use_rrd) {
                plain_head[s] = std::make_unique<nn::Conv2d>(opts_.width, 1, 3);
                register_module("head" + tag, *plain_head[s]);
            }
        }
        if (opts_.use_rrd) {
            rrd = std::make_unique<RrdDecoder>(opts_.width);
            register_module("rrd", *rrd);
        }
    }

    const SegmenterOptions& options() const { return opts_; }

    ForwardTrace forward_trace(const Var& image) {
        ForwardTrace t;
        t.pyramid = encoder.extract_features(image);
        auto [f5, p5] = encoder.aspp_head(t.pyramid.f4);
        t.pyramid.f5 = f5;

        const std::array<const Var*, 4> stages = {&t.pyramid.f1, &t.pyramid.f2, &t.pyramid.f3,
                                                  &t.pyramid.f4};
        for (int s = 0; s < 4; ++s)
            t.coherent[s] = opts_.use_isc ? isc[s]->forward(*stages[s])
                                          : proj[s]->forward(*stages[s]);

        for (int s = 0; s < 4; ++s) {
            if (!opts_.use_csc) {
                t.context[s] = t.coherent[s];
                continue;
            }
            const Var& next = (s == 3) ? f5 : t.coherent[s + 1];
            t.context[s] = csc[s]->forward(t.coherent[s], next);
        }

        if (opts_.use_rrd) {
            t.preds = rrd->decode(t.context, p5);
        } else {
            t.preds.p[4] = p5;
            for (int s = 0; s < 4; ++s)
                t.preds.p[static_cast<size_t>(s)] = plain_head[s]->forward(t.context[s]);
        }
        return t;
    }

    PredictionPyramid forward(const Var& image) { return forward_trace(image).preds; }

    Encoder encoder;
    std::array<std::unique_ptr<IscBlock>, 4> isc;
    std::array<std::unique_ptr<nn::Conv2d>, 4> proj;
    std::array<std::unique_ptr<CscBlock>, 4> csc;
    std::unique_ptr<RrdDecoder> rrd;
    std::array<std::unique_ptr<nn::Conv2d>, 4> plain_head;

private:
    SegmenterOptions opts_;
};

}  // namespace hcm
