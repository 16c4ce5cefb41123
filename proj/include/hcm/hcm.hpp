#pragma once

#include "hcm/core/autograd.hpp"
#include "hcm/core/conv.hpp"
#include "hcm/core/ops.hpp"
#include "hcm/core/tensor.hpp"
#include "hcm/data/dataset.hpp"
#include "hcm/data/image_io.hpp"
#include "hcm/engine/config.hpp"
#include "hcm/engine/serialize.hpp"
#include "hcm/engine/trainer.hpp"
#include "hcm/losses.hpp"
#include "hcm/metrics.hpp"
#include "hcm/model/csc.hpp"
#include "hcm/model/encoder.hpp"
#include "hcm/model/isc.hpp"
#include "hcm/model/rrd.hpp"
#include "hcm/model/segmenter.hpp"
#include "hcm/nn/adam.hpp"
#include "hcm/nn/init.hpp"
#include "hcm/nn/module.hpp"
