#pragma once

#include <limits>

#include "fspnet/ad/tape.hpp"

namespace fspnet::ad {

struct AdamWConfig {
    Real lr = 1e-3;
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real eps = 1e-8;
    Real weight_decay = 1e-2;
};

struct StepDiagnostics {
    int skipped_nonfinite = 0;
    int updated = 0;
};

/// One AdamW step over every trainable (non-frozen) entry: decoupled decay
/// theta -= lr*wd*theta, then bias-corrected Adam moments. Entries whose
/// gradient is non-finite are skipped and counted.
StepDiagnostics adamw_step(ParamStore& store, const AdamWConfig& cfg);

/// Reduce-on-plateau state. `lr` is the current learning rate.
struct SchedulerState {
    Real lr = 1e-3;
    Real best = std::numeric_limits<Real>::infinity();
    int since_improve = 0;
    int patience = 10;
    Real factor = 0.5;
    Real floor_lr = 1e-6;
    Real rel_threshold = 1e-4;
};

/// Per-epoch update: improvement beyond the relative threshold resets the
/// counter; `patience` stale epochs decay lr by `factor` down to `floor_lr`.
void plateau_step(SchedulerState& s, Real epoch_metric);

}  // namespace fspnet::ad
