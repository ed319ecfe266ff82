#pragma once

#include <string>
#include <vector>

#include "chmc/ner.hpp"

namespace chmc {

// HTTP annotator endpoint. Requests are serialized per endpoint with at
// most batch_size documents in flight.
struct RemoteNerConfig {
    std::string host = "127.0.0.1";
    int port = 0;
    std::string path = "/annotate";
    int max_retries = 3;
    size_t batch_size = 16;
    int timeout_sec = 5;
};

struct RemoteNerReport {
    size_t documents = 0;
    size_t rejected = 0;  // invalid spans in response, falls back to local
    std::vector<std::string> rejected_ids;
    size_t retries = 0;
};

// POSTs {"documents":[{"id","text"}]} and expects
// {"documents":[{"id","entities":[{start,end,type,text}]}]}. Spans are
// validated against each text before acceptance; documents with invalid
// spans fall back to the local rule/gazetteer annotator. Transport failures
// retry up to max_retries, then throw IoError.
std::vector<std::vector<EntitySpan>> fetch_remote_annotations(
    const std::vector<std::string>& texts, const RemoteNerConfig& config,
    const Gazetteer& fallback_gazetteer, RemoteNerReport* report = nullptr);

}  // namespace chmc
