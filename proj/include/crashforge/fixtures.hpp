#pragma once

// Hand-authored reference cases.

#include "crashforge/case_model.hpp"

namespace crashforge {

/// CASEID 28197: four vehicles, two events; V2 carries one record per event.
/// Values beyond the first table rows are synthetic filler.
CrashCase fixture_figure2();

/// CASEID 32548: three-vehicle chain with six V2 records, two of them
/// mislabeled, and no EDR data for V1.
CrashCase replay_case_32548();

}  // namespace crashforge
