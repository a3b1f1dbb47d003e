#pragma once

namespace vfsynth {

/// Worker count: the request if positive, else VFSYNTH_JOBS if set and
/// positive, else the OpenMP default.
int resolve_jobs(int requested);

}  // namespace vfsynth
