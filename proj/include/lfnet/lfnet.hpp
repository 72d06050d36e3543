#pragma once

// Umbrella header for the lattice fusion network engine.

#include "lfnet/autograd.hpp"
#include "lfnet/error.hpp"
#include "lfnet/evaluate.hpp"
#include "lfnet/image.hpp"
#include "lfnet/lattice.hpp"
#include "lfnet/metrics.hpp"
#include "lfnet/model.hpp"
#include "lfnet/ops.hpp"
#include "lfnet/optim.hpp"
#include "lfnet/rng.hpp"
#include "lfnet/serialize.hpp"
#include "lfnet/synthetic.hpp"
#include "lfnet/tensor.hpp"
#include "lfnet/training.hpp"
