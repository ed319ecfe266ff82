#include "chmc/ner_remote.hpp"

#include <algorithm>
#include <map>

#include <httplib.h>
#include <json.hpp>

#include "chmc/errors.hpp"
#include "chmc/log.hpp"

namespace chmc {

std::vector<std::vector<EntitySpan>> fetch_remote_annotations(
    const std::vector<std::string>& texts, const RemoteNerConfig& config,
    const Gazetteer& fallback_gazetteer, RemoteNerReport* report) {
    RemoteNerReport local_report;
    RemoteNerReport& rep = report ? *report : local_report;
    rep.documents = texts.size();

    std::vector<std::vector<EntitySpan>> out(texts.size());
    httplib::Client client(config.host, config.port);
    client.set_connection_timeout(config.timeout_sec, 0);
    client.set_read_timeout(config.timeout_sec, 0);

    for (size_t start = 0; start < texts.size(); start += config.batch_size) {
        const size_t end = std::min(texts.size(), start + config.batch_size);
        nlohmann::ordered_json body;
        body["documents"] = nlohmann::ordered_json::array();
        for (size_t i = start; i < end; ++i)
            body["documents"].push_back({{"id", std::to_string(i)}, {"text", texts[i]}});
        const std::string payload = body.dump();

        httplib::Result res;
        int attempt = 0;
        for (;; ++attempt) {
            res = client.Post(config.path, payload, "application/json");
            if (res && res->status == 200) break;
            if (attempt >= config.max_retries)
                throw IoError("remote annotator unreachable after " +
                              std::to_string(attempt + 1) + " attempts (" + config.host + ":" +
                              std::to_string(config.port) + ")");
            ++rep.retries;
            log::debug("remote annotator retry " + std::to_string(attempt + 1));
        }

        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("remote annotator response: ") + e.what());
        }
        if (!parsed.contains("documents") || !parsed["documents"].is_array())
            throw ParseError("remote annotator response missing \"documents\"");

        std::map<std::string, const nlohmann::json*> by_id;
        for (const auto& doc : parsed["documents"])
            by_id[doc.at("id").get<std::string>()] = &doc;

        for (size_t i = start; i < end; ++i) {
            const auto it = by_id.find(std::to_string(i));
            bool ok = it != by_id.end();
            std::vector<EntitySpan> spans;
            if (ok) {
                try {
                    for (const auto& e : it->second->at("entities")) {
                        EntitySpan s;
                        s.start = e.at("start").get<size_t>();
                        s.end = e.at("end").get<size_t>();
                        s.type = entity_type_from_name(e.at("type").get<std::string>());
                        s.surface = e.value("text", std::string());
                        spans.push_back(s);
                    }
                    validate_spans(texts[i], spans);
                    std::sort(spans.begin(), spans.end(),
                              [](const EntitySpan& a, const EntitySpan& b) {
                                  return a.start < b.start;
                              });
                } catch (const std::exception& e) {
                    ok = false;
                    log::info("rejecting remote annotation for document " + std::to_string(i) +
                              ": " + e.what());
                }
            }
            if (ok) {
                out[i] = std::move(spans);
            } else {
                ++rep.rejected;
                rep.rejected_ids.push_back(std::to_string(i));
                out[i] = annotate(texts[i], fallback_gazetteer);
            }
        }
    }
    return out;
}

}  // namespace chmc
