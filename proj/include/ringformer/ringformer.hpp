#pragma once

#include "ringformer/adversarial.hpp"
#include "ringformer/common.hpp"
#include "ringformer/conformer.hpp"
#include "ringformer/dsp.hpp"
#include "ringformer/generator.hpp"
#include "ringformer/io.hpp"
#include "ringformer/metrics.hpp"
#include "ringformer/ring_attention.hpp"
#include "ringformer/tensor.hpp"
