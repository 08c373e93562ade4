#pragma once

#include <string>

#include "rampmeter/csv_io.hpp"
#include "rampmeter/harness.hpp"

namespace rampmeter::scenario_io {

// Scenario files are JSON with a top-level schema version (currently 1).
// Unknown keys are rejected so typos fail loudly; all errors carry the file
// name and the offending key.

harness::Scenario load_scenario(const std::string& path);
void save_scenario(const harness::Scenario& sc, const std::string& path);

struct EstimateOptions {
    double sample_period_s = 20.0;
    csv::DetectorCsvOptions detector{};
    fdestim::EstimatorConfig estimator{};  // windows in seconds here; estimate
                                           // converts to hours internally
};

EstimateOptions load_estimate_options(const std::string& path);

} // namespace rampmeter::scenario_io
