#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "chmc/mat.hpp"

namespace chmc {

// Decoupled-weight-decay adaptive-moment optimizer. State is keyed by
// tensor name so encoder and head parameter structs can share one instance;
// call begin_step once per training step before the updates.
template <typename S>
class AdamW {
public:
    AdamW(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
          double weight_decay = 0.01)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), wd_(weight_decay) {}

    void begin_step() { ++t_; }
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    long step_count() const { return t_; }

    void update(const std::string& name, Mat<S>& param, const Mat<S>& grad) {
        auto& slot = slots_[name];
        if (slot.m.size() != param.count()) {
            slot.m.assign(param.count(), S(0));
            slot.v.assign(param.count(), S(0));
        }
        const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (size_t i = 0; i < param.count(); ++i) {
            const double g = static_cast<double>(grad.a[i]);
            slot.m[i] = static_cast<S>(b1_ * slot.m[i] + (1.0 - b1_) * g);
            slot.v[i] = static_cast<S>(b2_ * slot.v[i] + (1.0 - b2_) * g * g);
            const double mhat = static_cast<double>(slot.m[i]) / bc1;
            const double vhat = static_cast<double>(slot.v[i]) / bc2;
            const double upd = mhat / (std::sqrt(vhat) + eps_) + wd_ * static_cast<double>(param.a[i]);
            param.a[i] -= static_cast<S>(lr_ * upd);
        }
    }

    // Applies update to every tensor enumerated by the params struct.
    template <typename P>
    void update_all(P& params, P& grads) {
        std::vector<std::pair<std::string, Mat<S>*>> ps, gs;
        params.for_each([&](const std::string& n, Mat<S>& m) { ps.emplace_back(n, &m); });
        grads.for_each([&](const std::string& n, Mat<S>& m) { gs.emplace_back(n, &m); });
        for (size_t i = 0; i < ps.size(); ++i) update(ps[i].first, *ps[i].second, *gs[i].second);
    }

private:
    struct Slot {
        std::vector<S> m, v;
    };
    std::map<std::string, Slot> slots_;
    double lr_, b1_, b2_, eps_, wd_;
    long t_ = 0;
};

}  // namespace chmc
