#pragma once

#include "radnet/augment.hpp"
#include "radnet/blas.hpp"
#include "radnet/checkpoint.hpp"
#include "radnet/config.hpp"
#include "radnet/dataset.hpp"
#include "radnet/error.hpp"
#include "radnet/features.hpp"
#include "radnet/gradcheck.hpp"
#include "radnet/gradcheck_suite.hpp"
#include "radnet/image_io.hpp"
#include "radnet/layers.hpp"
#include "radnet/model.hpp"
#include "radnet/rng.hpp"
#include "radnet/svm.hpp"
#include "radnet/synth.hpp"
#include "radnet/tensor.hpp"
#include "radnet/trainer.hpp"
