#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "syncsim/environment.hpp"
#include "syncsim/topology.hpp"

namespace syncsim {

// Key order in every document is fixed and documented in docs/schemas.md.
using ordered_json = nlohmann::ordered_json;

ordered_json network_to_json(const GroundTruthNetwork& net);
ordered_json scm_to_json(const Scm& scm);
ordered_json task_record_to_json(const TaskRecord& rec);
// One line of debug.jsonl.
ordered_json step_to_json(std::int64_t period, const SyncAction& action, const StepOutcome& out);

// Non-finite latencies are written as null.
ordered_json latency_json(double ms);

}  // namespace syncsim
