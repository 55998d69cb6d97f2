#pragma once

// Umbrella header for the vitforge library.

#include "vitforge/checkpoint.hpp"
#include "vitforge/dataset.hpp"
#include "vitforge/errors.hpp"
#include "vitforge/fit.hpp"
#include "vitforge/image.hpp"
#include "vitforge/kernels.hpp"
#include "vitforge/metrics.hpp"
#include "vitforge/profiler.hpp"
#include "vitforge/rng.hpp"
#include "vitforge/tensor.hpp"
#include "vitforge/threading.hpp"
#include "vitforge/train.hpp"
#include "vitforge/vit.hpp"
