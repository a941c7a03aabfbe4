#include "dat/llm_gateway.hpp"

#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "dat/errors.hpp"

namespace dat {

namespace {

using nlohmann::json;

json messages_to_json(const std::vector<ChatMessage>& messages) {
    json arr = json::array();
    for (const auto& m : messages) {
        arr.push_back({{"role", m.role}, {"content", m.content}});
    }
    return arr;
}

std::vector<ChatMessage> messages_from_json(const json& arr) {
    std::vector<ChatMessage> messages;
    for (const auto& m : arr) {
        messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    }
    return messages;
}

json params_to_json(const GenerationParams& params) {
    return {{"temperature", params.temperature},
            {"max_output_tokens", params.max_output_tokens},
            {"model_name", params.model_name}};
}

GenerationParams params_from_json(const json& j) {
    GenerationParams params;
    params.temperature = j.value("temperature", 0.1);
    params.max_output_tokens = j.value("max_output_tokens", 1024);
    params.model_name = j.value("model_name", std::string{});
    return params;
}

void check_messages(const std::vector<ChatMessage>& messages) {
    if (messages.empty()) {
        throw ConfigError("gateway: message list must not be empty");
    }
    if (messages.back().role != "user") {
        throw ConfigError("gateway: last message role must be 'user', got '" +
                          messages.back().role + "'");
    }
}

bool retryable_status(int status) { return status == 429 || (status >= 500 && status < 600); }

std::string clip(const std::string& s, std::size_t limit = 80) {
    if (s.size() <= limit) return s;
    return s.substr(0, limit) + "...";
}

}  // namespace

std::string message_key(const std::vector<ChatMessage>& messages) {
    return messages_to_json(messages).dump();
}

void GatewayConfig::validate() const {
    if (endpoint_url.empty()) throw ConfigError("gateway: endpoint_url is required");
    if (retry_limit < 0) throw ConfigError("gateway: retry_limit must be >= 0");
}

// ---------------------------------------------------------------------------
// HttpGateway

HttpGateway::HttpGateway(GatewayConfig config) : config_(std::move(config)) {
    config_.validate();
    // Split scheme://host[:port] from the request path.
    const auto scheme_end = config_.endpoint_url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("gateway: endpoint_url must start with http:// or https://");
    }
    const auto path_start = config_.endpoint_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        host_ = config_.endpoint_url;
        path_ = "/";
    } else {
        host_ = config_.endpoint_url.substr(0, path_start);
        path_ = config_.endpoint_url.substr(path_start);
    }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (host_.rfind("https://", 0) == 0) {
        throw ConfigError("gateway: built without TLS support, https endpoints unavailable");
    }
#endif
}

HttpGateway::~HttpGateway() = default;

std::vector<ChatExchange> HttpGateway::exchanges() const {
    std::lock_guard lock(audit_mutex_);
    return audit_;
}

ChatExchange HttpGateway::do_complete(const std::vector<ChatMessage>& messages,
                                      const GenerationParams& params) {
    check_messages(messages);

    json body = {{"model", params.model_name},
                 {"messages", messages_to_json(messages)},
                 {"temperature", params.temperature},
                 {"max_tokens", params.max_output_tokens}};
    const std::string payload = body.dump();

    int last_status = 0;
    std::string last_detail;
    for (int attempt = 0; attempt <= config_.retry_limit; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(config_.backoff_base * (1 << (attempt - 1)));
        }

        httplib::Client client(host_);
        client.set_connection_timeout(config_.request_timeout);
        client.set_read_timeout(config_.request_timeout);
        client.set_write_timeout(config_.request_timeout);
        if (!config_.auth_token.empty()) {
            client.set_bearer_token_auth(config_.auth_token);
        }

        auto res = client.Post(path_, payload, "application/json");
        if (!res) {
            last_status = 0;
            last_detail = httplib::to_string(res.error());
            continue;  // connection failure / timeout: retryable
        }
        if (res->status != 200) {
            last_status = res->status;
            last_detail = clip(res->body);
            if (retryable_status(res->status)) continue;
            throw AuthError("gateway: endpoint returned HTTP " + std::to_string(res->status) +
                                " (not retryable): " + last_detail,
                            res->status);
        }

        json parsed;
        try {
            parsed = json::parse(res->body);
        } catch (const json::exception& e) {
            throw MalformedResponseError(std::string("gateway: response is not JSON: ") +
                                         e.what());
        }
        std::string text;
        try {
            text = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            throw MalformedResponseError(
                "gateway: response lacks choices[0].message.content: " + clip(res->body));
        }
        if (text.empty()) {
            throw MalformedResponseError("gateway: endpoint returned an empty completion");
        }

        ChatExchange exchange{messages, params, text, std::nullopt};
        if (parsed.contains("usage") && parsed["usage"].is_object()) {
            TokenUsage usage;
            usage.input_tokens = parsed["usage"].value("prompt_tokens", 0);
            usage.output_tokens = parsed["usage"].value("completion_tokens", 0);
            exchange.usage = usage;
        }
        {
            std::lock_guard lock(audit_mutex_);
            audit_.push_back(exchange);
        }
        return exchange;
    }

    throw TransportError("gateway: exhausted " + std::to_string(config_.retry_limit) +
                             " retries; last status " + std::to_string(last_status) +
                             (last_detail.empty() ? "" : " (" + last_detail + ")"),
                         last_status);
}

// ---------------------------------------------------------------------------
// TranscriptStore

std::string TranscriptStore::entry_to_line(const TranscriptEntry& entry) {
    json j = {{"messages", messages_to_json(entry.messages)},
              {"params", params_to_json(entry.params)},
              {"response_text", entry.response_text}};
    return j.dump();
}

TranscriptEntry TranscriptStore::entry_from_line(const std::string& line) {
    const json j = json::parse(line);
    TranscriptEntry entry;
    entry.messages = messages_from_json(j.at("messages"));
    entry.params = params_from_json(j.at("params"));
    entry.response_text = j.at("response_text").get<std::string>();
    return entry;
}

TranscriptStore TranscriptStore::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw StoreError("transcript store: cannot open " + path.string());
    }
    TranscriptStore store;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            store.append(entry_from_line(line));
        } catch (const json::exception& e) {
            throw StoreError("transcript store " + path.string() + " line " +
                             std::to_string(line_no) + ": " + e.what());
        }
    }
    return store;
}

void TranscriptStore::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw StoreError("transcript store: cannot write " + path.string());
    }
    for (const auto& entry : entries_) {
        out << entry_to_line(entry) << '\n';
    }
    if (!out) {
        throw StoreError("transcript store: write failed for " + path.string());
    }
}

void TranscriptStore::append(TranscriptEntry entry) {
    const std::string key = message_key(entry.messages);
    entries_.push_back(std::move(entry));
    by_key_.emplace(key, entries_.size() - 1);  // keep the first recording for a key
}

const TranscriptEntry* TranscriptStore::find(const std::vector<ChatMessage>& messages) const {
    const auto it = by_key_.find(message_key(messages));
    if (it == by_key_.end()) return nullptr;
    return &entries_[it->second];
}

// ---------------------------------------------------------------------------
// ReplayGateway

ReplayGateway::ReplayGateway(TranscriptStore store) : store_(std::move(store)) {}

ChatExchange ReplayGateway::do_complete(const std::vector<ChatMessage>& messages,
                                        const GenerationParams& params) {
    check_messages(messages);
    if (const auto* entry = store_.find(messages)) {
        return ChatExchange{messages, params, entry->response_text, std::nullopt};
    }

    // Locate the closest recorded exchange to name the first divergent
    // message in the diagnostic.
    std::size_t best_prefix = 0;
    const TranscriptEntry* best = nullptr;
    for (const auto& entry : store_.entries()) {
        std::size_t prefix = 0;
        while (prefix < entry.messages.size() && prefix < messages.size() &&
               entry.messages[prefix] == messages[prefix]) {
            ++prefix;
        }
        if (best == nullptr || prefix > best_prefix) {
            best_prefix = prefix;
            best = &entry;
        }
    }
    if (best == nullptr) {
        throw ReplayMissError("replay: unrecorded exchange (store is empty)");
    }
    std::string detail = "replay: unrecorded exchange; first divergent message at index " +
                         std::to_string(best_prefix);
    if (best_prefix < messages.size()) {
        detail += ": requested " + messages[best_prefix].role + " \"" +
                  clip(messages[best_prefix].content) + "\"";
    } else {
        detail += ": request is a strict prefix of a recorded exchange";
    }
    if (best_prefix < best->messages.size()) {
        detail += ", closest recording has " + best->messages[best_prefix].role + " \"" +
                  clip(best->messages[best_prefix].content) + "\"";
    }
    throw ReplayMissError(detail);
}

// ---------------------------------------------------------------------------
// RecordingGateway

RecordingGateway::RecordingGateway(std::shared_ptr<ChatGateway> inner,
                                   std::filesystem::path store_path)
    : inner_(std::move(inner)), store_path_(std::move(store_path)) {
    out_.open(store_path_, std::ios::app);
    if (!out_) {
        throw StoreError("transcript store: cannot open " + store_path_.string() +
                         " for recording");
    }
}

ChatExchange RecordingGateway::do_complete(const std::vector<ChatMessage>& messages,
                                           const GenerationParams& params) {
    ChatExchange exchange = inner_->complete(messages, params);
    TranscriptEntry entry{exchange.messages, exchange.params, exchange.response_text};
    const std::string line = TranscriptStore::entry_to_line(entry);
    {
        std::lock_guard lock(write_mutex_);
        out_ << line << '\n';
        out_.flush();
        if (!out_) {
            throw StoreError("transcript store: append failed for " + store_path_.string());
        }
        ++recorded_;
    }
    return exchange;
}

}  // namespace dat
