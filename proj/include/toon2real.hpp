#pragma once

#include "toon2real/error.hpp"
#include "toon2real/rng.hpp"
#include "toon2real/tensor.hpp"
#include "toon2real/nn/gemm.hpp"
#include "toon2real/nn/module.hpp"
#include "toon2real/nn/layers.hpp"
#include "toon2real/nn/adam.hpp"
#include "toon2real/imaging.hpp"
#include "toon2real/cartoonizer.hpp"
#include "toon2real/synthetic.hpp"
#include "toon2real/dataset.hpp"
#include "toon2real/models.hpp"
#include "toon2real/losses.hpp"
#include "toon2real/config.hpp"
#include "toon2real/checkpoint.hpp"
#include "toon2real/metrics.hpp"
#include "toon2real/training.hpp"
#include "toon2real/evaluation.hpp"
#include "toon2real/experiment.hpp"
