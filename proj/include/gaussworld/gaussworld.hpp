// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Umbrella header for the full library.

#include "gaussworld/core/autodiff.hpp"
#include "gaussworld/core/image_io.hpp"
#include "gaussworld/core/nn.hpp"
#include "gaussworld/core/optim.hpp"
#include "gaussworld/core/tensorfile.hpp"
#include "gaussworld/flow/flow.hpp"
#include "gaussworld/harness/ablate.hpp"
#include "gaussworld/harness/checkpoint.hpp"
#include "gaussworld/harness/config.hpp"
#include "gaussworld/harness/evaluate.hpp"
#include "gaussworld/harness/frechet.hpp"
#include "gaussworld/harness/generate.hpp"
#include "gaussworld/harness/metrics.hpp"
#include "gaussworld/harness/reconstruct.hpp"
#include "gaussworld/harness/train_diffusion.hpp"
#include "gaussworld/harness/train_vae.hpp"
#include "gaussworld/splat/ops.hpp"
#include "gaussworld/synth/dataset.hpp"
#include "gaussworld/vae/model.hpp"
