#include "chmc/masking.hpp"

#include <cmath>

#include "chmc/errors.hpp"
#include "chmc/rng.hpp"

namespace chmc {

void MaskingConfig::validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("masking alpha must lie in [0,1]");
    if (beta < 0.0 || beta > 1.0) throw ConfigError("masking beta must lie in [0,1]");
    if (replace_mask_p < 0.0 || replace_random_p < 0.0 || keep_p < 0.0)
        throw ConfigError("replacement probabilities must be non-negative");
    if (std::abs(replace_mask_p + replace_random_p + keep_p - 1.0) > 1e-9)
        throw ConfigError("replacement probabilities must sum to 1");
}

MaskingConfig standard_mlm_config() {
    MaskingConfig cfg;
    cfg.alpha = 0.15;
    cfg.beta = 0.15;
    return cfg;
}

MaskedExample mask_sequence(const TokenSequence& seq, const MaskingConfig& cfg, uint64_t seed,
                            size_t vocab_size) {
    cfg.validate();
    if (vocab_size <= kNumSpecials) throw ValidationError("vocab has no maskable tokens");
    Rng rng(mix_seed(seed, "mask_sequence"));
    MaskedExample ex;
    const size_t n = seq.size();
    ex.input_ids = seq.ids;
    ex.target_ids.assign(n, kIgnoreTarget);
    ex.selection_flags.assign(n, 0);
    for (size_t i = 0; i < n; ++i) {
        if (seq.is_special[i]) continue;  // CLS / SEP / PAD stay untouched
        double p = seq.is_entity[i] ? cfg.alpha : cfg.beta;
        if (p <= 0.0) continue;
        if (rng.uniform() >= p) continue;
        ex.selection_flags[i] = 1;
        ex.target_ids[i] = seq.ids[i];
        double r = rng.uniform();
        if (r < cfg.replace_mask_p) {
            ex.input_ids[i] = kMaskId;
        } else if (r < cfg.replace_mask_p + cfg.replace_random_p) {
            // uniform over non-special ids; entity tokens excluded so a
            // random draw cannot inject a fake entity signal
            ex.input_ids[i] =
                kNumSpecials + static_cast<int>(rng.below(vocab_size - kNumSpecials));
        }  // else keep original token
    }
    return ex;
}

}  // namespace chmc
