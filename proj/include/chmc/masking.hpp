#pragma once

#include <cstdint>
#include <vector>

#include "chmc/tokenizer.hpp"

namespace chmc {

// E-MLM corruption parameters. Entity tokens are selected with probability
// alpha, ordinary content tokens with beta; selected positions are replaced
// by [MASK] / a random token / kept unchanged with the 80/10/10 split.
struct MaskingConfig {
    double alpha = 0.5;
    double beta = 0.1;
    double replace_mask_p = 0.8;
    double replace_random_p = 0.1;
    double keep_p = 0.1;

    void validate() const;
};

// Standard MLM: alpha == beta == 0.15 with the 80/10/10 split. E-MLM
// degenerates to this when both rates coincide.
MaskingConfig standard_mlm_config();

constexpr int kIgnoreTarget = -1;

struct MaskedExample {
    std::vector<int> input_ids;
    std::vector<int> target_ids;  // original id at selected positions, else kIgnoreTarget
    std::vector<uint8_t> selection_flags;
};

// Deterministic given (seed); callers derive the seed from (base seed,
// sequence index) so batch composition does not change per-example noise.
// CLS/SEP/PAD are never selected. Random replacements exclude all 15
// special ids.
MaskedExample mask_sequence(const TokenSequence& seq, const MaskingConfig& cfg, uint64_t seed,
                            size_t vocab_size);

}  // namespace chmc
