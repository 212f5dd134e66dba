#include "fspnet/ad/optim.hpp"

#include <cmath>

namespace fspnet::ad {

StepDiagnostics adamw_step(ParamStore& store, const AdamWConfig& cfg) {
    StepDiagnostics diag;
    for (std::size_t i = 0; i < store.size(); ++i) {
        Param& p = store.param(i);
        if (p.frozen) continue;
        if (!p.grad.allFinite()) {
            ++diag.skipped_nonfinite;
            continue;
        }
        p.value *= (1.0 - cfg.lr * cfg.weight_decay);
        ++p.step_count;
        const Real t = Real(p.step_count);
        p.moment1 = cfg.beta1 * p.moment1 + (1.0 - cfg.beta1) * p.grad;
        p.moment2 = cfg.beta2 * p.moment2 + (1.0 - cfg.beta2) * p.grad.square();
        const Real c1 = 1.0 - std::pow(cfg.beta1, t);
        const Real c2 = 1.0 - std::pow(cfg.beta2, t);
        p.value -= cfg.lr * (p.moment1 / c1) / ((p.moment2 / c2).sqrt() + cfg.eps);
        ++diag.updated;
    }
    return diag;
}

void plateau_step(SchedulerState& s, Real epoch_metric) {
    FSPNET_REQUIRE(std::isfinite(epoch_metric), "plateau_step: non-finite metric");
    const bool improved =
        !std::isfinite(s.best) ||
        epoch_metric < s.best - s.rel_threshold * std::abs(s.best);
    if (improved) {
        s.best = epoch_metric;
        s.since_improve = 0;
    } else {
        ++s.since_improve;
        if (s.since_improve >= s.patience) {
            s.lr = std::max(s.lr * s.factor, s.floor_lr);
            s.since_improve = 0;
        }
    }
}

}  // namespace fspnet::ad
