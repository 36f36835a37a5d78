#pragma once

// Umbrella header: the full training/evaluation engine.

#include "mlfst/batching.hpp"
#include "mlfst/checkpoint.hpp"
#include "mlfst/error.hpp"
#include "mlfst/eval.hpp"
#include "mlfst/geodesy.hpp"
#include "mlfst/labeler.hpp"
#include "mlfst/log.hpp"
#include "mlfst/model.hpp"
#include "mlfst/nn.hpp"
#include "mlfst/optim.hpp"
#include "mlfst/pipeline.hpp"
#include "mlfst/run_config.hpp"
#include "mlfst/synth.hpp"
#include "mlfst/telemetry.hpp"
#include "mlfst/tensor.hpp"
