#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pex/error.hpp"
#include "pex/image.hpp"

namespace pex::adapters {

// A model input is either a text payload or an image payload.
using Input = std::variant<std::string, Image>;

// Wire form used for HTTP/subprocess protocols and digests. Text inputs are
// JSON strings; images are {"width","height","rgb_b64"} with base64 raw RGB.
nlohmann::json input_to_json(const Input& input);

struct Prediction {
  int label = 0;
  std::optional<std::vector<double>> probabilities;
  std::string error;  // per-sample backend failure, empty when ok

  bool ok() const { return error.empty(); }
};

enum class Task { TextBinary, ImageMulticlass };

class Backend {
public:
  virtual ~Backend() = default;
  // One prediction per input, in submission order.
  virtual std::vector<Prediction> predict(const std::vector<Input>& inputs) = 0;
};

struct ModelHandle {
  std::string id;  // stable identifier, part of cache keys
  Task task = Task::TextBinary;
  int num_classes = 2;
  bool exposes_probabilities = false;
  std::shared_ptr<Backend> backend;
};

// Order-preserving batched prediction with probability validation and
// transport retries (exponential backoff, at most kMaxTransportAttempts
// attempts).
inline constexpr int kMaxTransportAttempts = 3;
std::vector<Prediction> predict_batch(const ModelHandle& handle,
                                      const std::vector<Input>& inputs);

// ---------------------------------------------------------------------------
// Digests and canonical JSON

// Canonical form: compact separators, sorted object keys, UTF-8.
std::string canonical_json(const nlohmann::json& j);
std::string sha256_hex(std::string_view data);
std::string input_digest(const Input& input);

// ---------------------------------------------------------------------------
// Offline mode and the network call counter

void set_offline(bool offline);
bool offline();
std::uint64_t network_call_count();
void reset_network_call_count();

// ---------------------------------------------------------------------------
// Prediction cache: at most one backend call per (handle id, input digest)
// per process lifetime, optionally persisted as append-only JSONL.

class PredictionCache {
public:
  PredictionCache() = default;
  explicit PredictionCache(std::string persist_path);

  std::optional<Prediction> lookup(const std::string& handle_id,
                                   const std::string& digest) const;
  void store(const std::string& handle_id, const std::string& digest,
             const Prediction& prediction);

  std::size_t size() const;

private:
  mutable std::mutex mu_;
  std::map<std::string, Prediction> entries_;
  std::string persist_path_;
};

Prediction cached_predict(const ModelHandle& handle, PredictionCache& cache,
                          const Input& input);

// Wraps a backend so every distinct input hits it at most once per cache
// lifetime; with a persisted cache, reruns make zero backend calls.
std::shared_ptr<Backend> make_caching_backend(std::shared_ptr<Backend> inner,
                                              std::shared_ptr<PredictionCache> cache,
                                              std::string handle_id);

// ---------------------------------------------------------------------------
// Chat-completion clients (live HTTP or replay fixtures)

struct ChatClient {
  std::string id;
  std::string endpoint;     // e.g. http://localhost:8080/v1/chat/completions
  std::string fixture_dir;  // replay directory: <digest>.json files
  bool live_enabled = false;
  std::string model = "default";  // model name placed in the request
  double temperature = 0.0;     // decoding temperature, pinned for replay
  std::string api_key_env;      // env var holding a bearer token, optional
};

// Sends one user prompt, returns the assistant text. Fixture lookups are
// tried first; a miss with live disabled raises ProtocolError("fixture
// miss ...").
std::string chat_complete(const ChatClient& client, const std::string& prompt);

// The request body used for both live calls and fixture digests.
nlohmann::json chat_request_body(const ChatClient& client,
                                 const std::string& prompt);

// Writes a fixture file answering `prompt` with `reply` (test/recording aid).
std::string write_chat_fixture(const ChatClient& client,
                               const std::string& prompt,
                               const std::string& reply);

// ---------------------------------------------------------------------------
// Prompt templates

// Template files live in a directory as <id>.txt with {slot} placeholders.
class TemplateStore {
public:
  explicit TemplateStore(std::string dir) : dir_(std::move(dir)) {}

  std::string load(const std::string& template_id) const;
  // Substitutes slots; any placeholder left unfilled raises TemplateError
  // naming it.
  std::string render(const std::string& template_id,
                     const std::map<std::string, std::string>& slots) const;

  static std::string render_text(const std::string& text,
                                 const std::map<std::string, std::string>& slots);

private:
  std::string dir_;
};

// Renders the template, sends it, and parses the first JSON value embedded
// in the reply. On a parse or validation failure the parser message is
// appended to the prompt and the exchange retried; after `max_attempts`
// total attempts the raw text is carried in a ProtocolError. `validate`
// returns an error message for structurally wrong replies, empty when ok.
inline constexpr int kDefaultChatAttempts = 2;
using ReplyValidator = std::function<std::string(const nlohmann::json&)>;
nlohmann::json templated_chat(const ChatClient& client,
                              const TemplateStore& templates,
                              const std::string& template_id,
                              const std::map<std::string, std::string>& slots,
                              int max_attempts = kDefaultChatAttempts,
                              const ReplyValidator& validate = {});

// First JSON value in a chat reply ("###" trailers and prose tolerated).
nlohmann::json extract_json_block(const std::string& text);

// ---------------------------------------------------------------------------
// Backend constructors

std::shared_ptr<Backend> make_inprocess_backend(
    std::function<Prediction(const Input&)> fn);

// POST {endpoint}/predict with {"inputs":[...]}, expects {"labels":[...],
// "probabilities":[[...]] (optional)}.
std::shared_ptr<Backend> make_http_backend(std::string base_url);

// Newline-delimited JSON over stdin/stdout, one request object per input.
std::shared_ptr<Backend> make_subprocess_backend(std::string command);

// Read-only fixtures keyed by input digest: <dir>/<digest>.json holding
// {"label": ..., "probabilities": [...] (optional)}.
std::shared_ptr<Backend> make_replay_backend(std::string fixture_dir);

// Classifier built on a chat client and a prompt template with an {input}
// slot; the reply must parse to an integer label. Exposes no probabilities.
std::shared_ptr<Backend> make_llm_classifier_backend(ChatClient client,
                                                     TemplateStore templates,
                                                     std::string template_id);

// Writes a replay fixture for one model input (test/recording aid).
std::string write_model_fixture(const std::string& fixture_dir,
                                const Input& input,
                                const Prediction& prediction);

}  // namespace pex::adapters
