#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "chmc/encoder.hpp"
#include "chmc/heads.hpp"

namespace chmc {

// Binary checkpoint, magic "CHMC1": length-prefixed JSON header followed by
// named tensors (name, rank, dims, row-major little-endian f32).
struct Checkpoint {
    EncoderParams<float> encoder;
    std::optional<HeadParams<float>> head;
    nlohmann::ordered_json config_echo;
    long step = 0;
    std::string metric_name;
    double metric_value = 0.0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// ontology is required to reconstruct head layer shapes when the checkpoint
// carries a head.
Checkpoint load_checkpoint(const std::string& path, const LabelOntology* ontology = nullptr);

}  // namespace chmc
