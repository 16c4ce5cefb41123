#pragma once

#include "hcm/nn/module.hpp"

namespace hcm {

/// Intra-stage coherence: fuses 3x3 and 5x5 receptive-field branches within a
/// single backbone stage. Branch convolutions carry norm + relu; the residual
/// 1x1 path and the outer 3x3 that forms the fusion term stay linear so the
/// block is literally a sum of the two terms. The three 1x1 convolutions
/// (one per reduction branch, one residual) are independent instances with
/// unshared weights.
class IscBlock : public nn::Module {
public:
    IscBlock(int64_t in_ch, int64_t width)
        : reduce3(in_ch, width, 1),
          reduce5(in_ch, width, 1),
          branch3(width, width, 3),
          branch5(width, width, 5),
          fuse3(width, width, 3),
          fuse5(width, width, 5),
          outer3(width, width, 3),
          residual1(in_ch, width, 1) {
        register_module("reduce3", reduce3);
        register_module("reduce5", reduce5);
        register_module("branch3", branch3);
        register_module("branch5", branch5);
        register_module("fuse3", fuse3);
        register_module("fuse5", fuse5);
        register_module("outer3", outer3);
        register_module("residual1", residual1);
    }

    Var forward(const Var& x) {
        Var f3 = branch3.forward(reduce3.forward(x));
        Var f5 = branch5.forward(reduce5.forward(x));
        Var s = F::add(f3, f5);
        Var fused = outer3.forward(F::mul(fuse3.forward(s), fuse5.forward(s)));
        return F::add(residual1.forward(x), fused);
    }

    nn::ConvBNReLU reduce3, reduce5, branch3, branch5, fuse3, fuse5;
    nn::Conv2d outer3, residual1;
};

}  // namespace hcm
