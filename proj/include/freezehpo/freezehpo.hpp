#pragma once

#include "freezehpo/analysis/landscape.hpp"
#include "freezehpo/analysis/report.hpp"
#include "freezehpo/analysis/spearman.hpp"
#include "freezehpo/core/error.hpp"
#include "freezehpo/core/parallel.hpp"
#include "freezehpo/core/rng.hpp"
#include "freezehpo/core/types.hpp"
#include "freezehpo/fidelity/axis.hpp"
#include "freezehpo/fidelity/checks.hpp"
#include "freezehpo/fidelity/search_space.hpp"
#include "freezehpo/freezer/consolidate.hpp"
#include "freezehpo/freezer/cost_model.hpp"
#include "freezehpo/freezer/freeze_plan.hpp"
#include "freezehpo/freezer/measure.hpp"
#include "freezehpo/freezer/module_tree.hpp"
#include "freezehpo/harness/micro_backend.hpp"
#include "freezehpo/harness/pipelines.hpp"
#include "freezehpo/harness/protocol.hpp"
#include "freezehpo/harness/run_config.hpp"
#include "freezehpo/harness/store.hpp"
#include "freezehpo/harness/sweep.hpp"
#include "freezehpo/harness/worker_client.hpp"
#include "freezehpo/microtrainer/gradcheck.hpp"
#include "freezehpo/microtrainer/layer_spec.hpp"
#include "freezehpo/microtrainer/network.hpp"
#include "freezehpo/microtrainer/optimizer.hpp"
#include "freezehpo/microtrainer/propagation.hpp"
#include "freezehpo/microtrainer/task.hpp"
#include "freezehpo/microtrainer/tracking.hpp"
#include "freezehpo/microtrainer/trainer.hpp"
#include "freezehpo/scheduler/backend.hpp"
#include "freezehpo/scheduler/memory_parallel.hpp"
#include "freezehpo/scheduler/successive_halving.hpp"
