#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace dat {

struct GenerationParams {
    double temperature = 0.1;
    int max_output_tokens = 1024;
    std::string model_name;
};

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct TokenUsage {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
};

// One request/response with the model, as issued and received.
struct ChatExchange {
    std::vector<ChatMessage> messages;
    GenerationParams params;
    std::string response_text;
    std::optional<TokenUsage> usage;
};

// Canonical lookup key for a message list (stable JSON encoding).
std::string message_key(const std::vector<ChatMessage>& messages);

// Chat-completion access point. complete() counts every issued call; the
// counter is monotone and shared across threads.
class ChatGateway {
public:
    virtual ~ChatGateway() = default;

    ChatExchange complete(const std::vector<ChatMessage>& messages,
                          const GenerationParams& params) {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return do_complete(messages, params);
    }

    std::uint64_t call_count() const { return calls_.load(std::memory_order_relaxed); }

private:
    virtual ChatExchange do_complete(const std::vector<ChatMessage>& messages,
                                     const GenerationParams& params) = 0;

    std::atomic<std::uint64_t> calls_{0};
};

struct GatewayConfig {
    std::string endpoint_url;  // e.g. http://host:8000/v1/chat/completions
    std::string auth_token;    // sent as a bearer header, never logged or persisted
    int retry_limit = 3;
    std::chrono::milliseconds backoff_base{250};
    std::chrono::milliseconds request_timeout{120000};

    void validate() const;
};

// HTTP client for the open chat-completion JSON schema: POSTs
// {model, messages, temperature, max_tokens} and reads
// choices[0].message.content. Timeouts, HTTP 5xx and 429 retry with
// exponential backoff (base, 2x base, 4x base, ...); other 4xx fail
// immediately. Safe for concurrent callers.
class HttpGateway : public ChatGateway {
public:
    explicit HttpGateway(GatewayConfig config);
    ~HttpGateway() override;

    // Audit trail of completed exchanges (auth material excluded by
    // construction: exchanges carry only messages, params, response).
    std::vector<ChatExchange> exchanges() const;

private:
    ChatExchange do_complete(const std::vector<ChatMessage>& messages,
                             const GenerationParams& params) override;

    GatewayConfig config_;
    std::string host_;
    std::string path_;
    mutable std::mutex audit_mutex_;
    std::vector<ChatExchange> audit_;
};

struct TranscriptEntry {
    std::vector<ChatMessage> messages;
    GenerationParams params;
    std::string response_text;
};

// Newline-delimited JSON store of {messages, params, response_text}
// records, UTF-8.
class TranscriptStore {
public:
    TranscriptStore() = default;

    static TranscriptStore load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    void append(TranscriptEntry entry);
    std::size_t size() const { return entries_.size(); }
    const std::vector<TranscriptEntry>& entries() const { return entries_; }

    // First entry recorded for this exact message list, or nullptr.
    const TranscriptEntry* find(const std::vector<ChatMessage>& messages) const;

    static std::string entry_to_line(const TranscriptEntry& entry);
    static TranscriptEntry entry_from_line(const std::string& line);

private:
    std::vector<TranscriptEntry> entries_;
    std::unordered_map<std::string, std::size_t> by_key_;
};

// Serves recorded exchanges by exact message-list lookup; never touches the
// network. A miss raises ReplayMissError naming the first message that
// diverges from the closest recorded exchange.
class ReplayGateway : public ChatGateway {
public:
    explicit ReplayGateway(TranscriptStore store);

    const TranscriptStore& store() const { return store_; }

private:
    ChatExchange do_complete(const std::vector<ChatMessage>& messages,
                             const GenerationParams& params) override;

    TranscriptStore store_;
};

// Wraps a live gateway and appends every exchange to an on-disk transcript,
// one line per call, flushed immediately.
class RecordingGateway : public ChatGateway {
public:
    RecordingGateway(std::shared_ptr<ChatGateway> inner, std::filesystem::path store_path);

    const std::filesystem::path& store_path() const { return store_path_; }
    std::size_t recorded() const { return recorded_; }

private:
    ChatExchange do_complete(const std::vector<ChatMessage>& messages,
                             const GenerationParams& params) override;

    std::shared_ptr<ChatGateway> inner_;
    std::filesystem::path store_path_;
    std::mutex write_mutex_;
    std::ofstream out_;
    std::size_t recorded_ = 0;
};

}  // namespace dat
