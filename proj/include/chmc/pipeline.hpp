#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chmc/config.hpp"
#include "chmc/corpus.hpp"
#include "chmc/evaluation.hpp"
#include "chmc/ontology.hpp"
#include "chmc/synthetic.hpp"
#include "chmc/tokenizer.hpp"

namespace chmc {

inline constexpr const char* kVersion = "0.1.0";

// All artifacts land under out_dir; the manifest records the resolved
// config, its hash, seeds, and input/output digests so a run can be
// reproduced from the manifest alone.
struct PipelineResult {
    EvalReport dev_report;
    EvalReport test_report;
    std::string config_hash;
    std::string manifest_path;
};

// Partial stages support the stage-wise CLI commands; Full runs everything.
enum class PipelineStage { Pretrain, Finetune, Full };

PipelineResult run_pipeline(const Config& cfg, const std::string& out_dir, uint64_t seed,
                            size_t threads, const std::string& command = "run",
                            PipelineStage stage = PipelineStage::Full);

// The five ablation configurations plus the plain-text adaptive-MLM row.
struct AblationRowSpec {
    std::string name;
    bool pretrain = false;
    bool standard_masking = false;  // alpha = beta = 0.15 on plain text
    bool entity_tokens = false;
    std::string head;
};

const std::vector<AblationRowSpec>& ablation_rows();
Config ablation_row_config(const Config& base, const AblationRowSpec& row);

struct AblationRow {
    std::string name;
    std::string config_hash;
    double macro_f1_upper = 0.0;
    double macro_f1_lower = 0.0;
    double macro_f1_ait = 0.0;
};

std::vector<AblationRow> ablation_suite(const Config& base, const std::string& out_dir,
                                        uint64_t seed, size_t threads);

// Manifest plumbing shared by the CLI commands.
nlohmann::ordered_json build_manifest(const std::string& command, const Config& cfg,
                                      uint64_t seed, size_t threads,
                                      const std::vector<std::string>& input_paths,
                                      const std::string& out_dir,
                                      const std::vector<std::string>& output_names);
void write_manifest(const nlohmann::ordered_json& manifest, const std::string& path);

// Stage helpers reused by individual CLI subcommands.
struct LoadedData {
    LabelOntology ontology;
    Corpus fit, dev, test;
    Gazetteer gazetteer;
    std::vector<std::string> input_paths;
    std::vector<std::string> written;  // artifact names created during loading
};

LoadedData load_pipeline_data(const Config& cfg, const std::string& out_dir, uint64_t seed,
                              size_t threads);

std::vector<std::string> vocab_view_texts(const Corpus& corpus, bool entity_tokens);
std::vector<TokenSequence> encode_corpus(const Corpus& corpus, const Vocab& vocab, size_t max_len,
                                         bool entity_tokens);

}  // namespace chmc
