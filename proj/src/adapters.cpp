#include "pex/adapters.hpp"

#include <openssl/evp.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace pex::adapters {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_offline{false};
std::atomic<std::uint64_t> g_network_calls{0};

std::string base64_encode(const std::uint8_t* data, std::size_t len) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    std::uint32_t chunk = static_cast<std::uint32_t>(data[i]) << 16;
    if (i + 1 < len) chunk |= static_cast<std::uint32_t>(data[i + 1]) << 8;
    if (i + 2 < len) chunk |= data[i + 2];
    out += alphabet[(chunk >> 18) & 0x3f];
    out += alphabet[(chunk >> 12) & 0x3f];
    out += i + 1 < len ? alphabet[(chunk >> 6) & 0x3f] : '=';
    out += i + 2 < len ? alphabet[chunk & 0x3f] : '=';
  }
  return out;
}

json prediction_to_json(const Prediction& p) {
  json j{{"label", p.label}};
  if (p.probabilities) j["probabilities"] = *p.probabilities;
  if (!p.error.empty()) j["error"] = p.error;
  return j;
}

Prediction prediction_from_json(const json& j) {
  Prediction p;
  if (j.contains("error")) {
    p.error = j.at("error").get<std::string>();
    return p;
  }
  p.label = j.at("label").get<int>();
  if (j.contains("probabilities") && !j.at("probabilities").is_null())
    p.probabilities = j.at("probabilities").get<std::vector<double>>();
  return p;
}

// Splits "http://host:port/some/path" into origin and path.
std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw ConfigError("URL '" + url + "' lacks a scheme");
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

// One HTTP POST with retries. Counts every request actually sent.
std::string http_post_json(const std::string& url, const std::string& body,
                           const std::string& bearer_token) {
  if (g_offline.load())
    throw TransportError("offline mode forbids live network calls to " + url);
  auto [origin, path] = split_url(url);
  std::string last_error;
  int backoff_ms = 50;
  for (int attempt = 1; attempt <= kMaxTransportAttempts; ++attempt) {
    httplib::Client client(origin);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(60, 0);
    httplib::Headers headers;
    if (!bearer_token.empty())
      headers.emplace("Authorization", "Bearer " + bearer_token);
    g_network_calls.fetch_add(1);
    auto res = client.Post(path, headers, body, "application/json");
    if (res && res->status == 200) return res->body;
    if (res) last_error = "HTTP " + std::to_string(res->status) + " from " + url;
    else last_error = "connection to " + url + " failed";
    if (attempt < kMaxTransportAttempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
  }
  throw TransportError(last_error);
}

std::string bearer_from_env(const std::string& env_var) {
  if (env_var.empty()) return {};
  const char* v = std::getenv(env_var.c_str());
  return v ? v : "";
}

std::string excerpt(const std::string& s, std::size_t n = 160) {
  return s.size() <= n ? s : s.substr(0, n) + "...";
}

}  // namespace

json input_to_json(const Input& input) {
  if (const auto* text = std::get_if<std::string>(&input)) return json(*text);
  const auto& img = std::get<Image>(input);
  return json{{"width", img.width},
              {"height", img.height},
              {"rgb_b64", base64_encode(img.rgb.data(), img.rgb.size())}};
}

std::string canonical_json(const json& j) {
  // nlohmann objects keep keys sorted; compact dump has no insignificant
  // whitespace.
  return j.dump();
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr))
    throw ProtocolError("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string input_digest(const Input& input) {
  return sha256_hex(canonical_json(input_to_json(input)));
}

void set_offline(bool offline) { g_offline.store(offline); }
bool offline() { return g_offline.load(); }
std::uint64_t network_call_count() { return g_network_calls.load(); }
void reset_network_call_count() { g_network_calls.store(0); }

// ---------------------------------------------------------------------------
// predict_batch

std::vector<Prediction> predict_batch(const ModelHandle& handle,
                                      const std::vector<Input>& inputs) {
  if (inputs.empty()) throw ContractError("predict_batch needs inputs");
  if (!handle.backend) throw ConfigError("model handle has no backend");
  for (const auto& input : inputs) {
    const bool is_text = std::holds_alternative<std::string>(input);
    if (is_text != (handle.task == Task::TextBinary))
      throw ContractError("input type does not match the handle's task");
  }

  auto predictions = handle.backend->predict(inputs);
  if (predictions.size() != inputs.size())
    throw ProtocolError("backend returned " + std::to_string(predictions.size()) +
                        " predictions for " + std::to_string(inputs.size()) +
                        " inputs");

  for (auto& p : predictions) {
    if (!p.ok()) continue;
    if (handle.exposes_probabilities) {
      if (!p.probabilities)
        throw ProtocolError("backend omitted probabilities for handle '" +
                            handle.id + "'");
      double sum = 0.0;
      for (double v : *p.probabilities) sum += v;
      if (std::abs(sum - 1.0) > 1e-6)
        throw ProtocolError("probability vector not normalized (sum=" +
                            std::to_string(sum) + ")");
      if (p.label < 0 || static_cast<std::size_t>(p.label) >= p.probabilities->size())
        throw ProtocolError("label outside probability vector range");
    } else {
      p.probabilities.reset();
    }
  }
  return predictions;
}

// ---------------------------------------------------------------------------
// PredictionCache

namespace {
std::string cache_key(const std::string& handle_id, const std::string& digest) {
  return handle_id + "\x1f" + digest;
}
}  // namespace

PredictionCache::PredictionCache(std::string persist_path)
    : persist_path_(std::move(persist_path)) {
  if (persist_path_.empty() || !fs::exists(persist_path_)) return;
  std::ifstream in(persist_path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;  // tolerate a torn trailing record
    entries_[cache_key(j.at("handle").get<std::string>(),
                       j.at("digest").get<std::string>())] =
        prediction_from_json(j.at("prediction"));
  }
}

std::optional<Prediction> PredictionCache::lookup(const std::string& handle_id,
                                                  const std::string& digest) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(cache_key(handle_id, digest));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void PredictionCache::store(const std::string& handle_id,
                            const std::string& digest,
                            const Prediction& prediction) {
  std::lock_guard<std::mutex> lock(mu_);
  auto [it, inserted] = entries_.emplace(cache_key(handle_id, digest), prediction);
  if (!inserted || persist_path_.empty()) return;
  std::ofstream out(persist_path_, std::ios::app);
  out << canonical_json(json{{"handle", handle_id},
                             {"digest", digest},
                             {"prediction", prediction_to_json(prediction)}})
      << "\n";
}

std::size_t PredictionCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

Prediction cached_predict(const ModelHandle& handle, PredictionCache& cache,
                          const Input& input) {
  const std::string digest = input_digest(input);
  if (auto hit = cache.lookup(handle.id, digest)) return *hit;
  auto predictions = predict_batch(handle, {input});
  cache.store(handle.id, digest, predictions[0]);
  return predictions[0];
}

// ---------------------------------------------------------------------------
// Chat clients

json chat_request_body(const ChatClient& client, const std::string& prompt) {
  return json{{"messages", json::array({json{{"content", prompt}, {"role", "user"}}})},
              {"model", client.model},
              {"temperature", client.temperature}};
}

namespace {

std::string chat_fixture_path(const ChatClient& client, const std::string& digest) {
  return (fs::path(client.fixture_dir) / (digest + ".json")).string();
}

std::string chat_reply_from_response(const json& response) {
  try {
    return response.at("choices").at(0).at("message").at("content")
        .get<std::string>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("chat response missing choices[0].message"
                                    ".content: ") + e.what());
  }
}

}  // namespace

std::string chat_complete(const ChatClient& client, const std::string& prompt) {
  const json body = chat_request_body(client, prompt);
  const std::string digest = sha256_hex(canonical_json(body));

  if (!client.fixture_dir.empty()) {
    const std::string path = chat_fixture_path(client, digest);
    if (fs::exists(path)) {
      std::ifstream in(path);
      json response = json::parse(in, nullptr, false);
      if (response.is_discarded())
        throw ParseError("fixture " + path + " holds invalid JSON");
      return chat_reply_from_response(response);
    }
  }

  if (!client.live_enabled || offline()) {
    throw ProtocolError("fixture miss for chat client '" + client.id +
                        "' (digest " + digest + ") and live calls are disabled");
  }

  const std::string raw = http_post_json(client.endpoint, canonical_json(body),
                                         bearer_from_env(client.api_key_env));
  json response = json::parse(raw, nullptr, false);
  if (response.is_discarded())
    throw ProtocolError("chat endpoint returned invalid JSON: " + excerpt(raw));
  if (!client.fixture_dir.empty()) {
    // Recording mode: live replies are persisted for later replay.
    fs::create_directories(client.fixture_dir);
    std::ofstream out(chat_fixture_path(client, digest));
    out << response.dump(2) << "\n";
  }
  return chat_reply_from_response(response);
}

std::string write_chat_fixture(const ChatClient& client,
                               const std::string& prompt,
                               const std::string& reply) {
  const json body = chat_request_body(client, prompt);
  const std::string digest = sha256_hex(canonical_json(body));
  fs::create_directories(client.fixture_dir);
  const json response{
      {"choices",
       json::array({json{{"message", json{{"content", reply}, {"role", "assistant"}}}}})}};
  std::ofstream out(chat_fixture_path(client, digest));
  out << response.dump(2) << "\n";
  return digest;
}

// ---------------------------------------------------------------------------
// Templates

std::string TemplateStore::load(const std::string& template_id) const {
  const fs::path path = fs::path(dir_) / (template_id + ".txt");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TemplateError("template file not found: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string TemplateStore::render_text(
    const std::string& text, const std::map<std::string, std::string>& slots) {
  std::string out;
  out.reserve(text.size());
  std::vector<std::string> unfilled;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c != '{') {
      out += c;
      ++i;
      continue;
    }
    // Placeholder = '{' identifier '}'. Anything else passes through
    // verbatim so JSON examples inside prompts stay intact.
    std::size_t j = i + 1;
    while (j < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
      ++j;
    if (j > i + 1 && j < text.size() && text[j] == '}' &&
        !std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
      const std::string name = text.substr(i + 1, j - i - 1);
      auto it = slots.find(name);
      if (it != slots.end()) {
        out += it->second;
      } else {
        unfilled.push_back(name);
      }
      i = j + 1;
    } else {
      out += c;
      ++i;
    }
  }
  if (!unfilled.empty()) {
    std::string names;
    for (const auto& n : unfilled) {
      if (!names.empty()) names += ", ";
      names += n;
    }
    throw TemplateError("unfilled template placeholders: " + names);
  }
  return out;
}

std::string TemplateStore::render(
    const std::string& template_id,
    const std::map<std::string, std::string>& slots) const {
  return render_text(load(template_id), slots);
}

json extract_json_block(const std::string& text) {
  // Look for the first balanced {...} or [...] span outside string literals.
  for (std::size_t start = 0; start < text.size(); ++start) {
    char open = text[start];
    if (open != '{' && open != '[') continue;
    char close = open == '{' ? '}' : ']';
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (c == '\\') ++i;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == open) ++depth;
      else if (c == close) {
        if (--depth == 0) {
          json j = json::parse(text.substr(start, i - start + 1), nullptr, false);
          if (!j.is_discarded()) return j;
          break;  // malformed span; try the next opener
        }
      }
    }
  }
  // No structured block: accept a bare scalar reply ("1", "0.5", ...).
  std::string trimmed = text;
  while (!trimmed.empty() &&
         (std::isspace(static_cast<unsigned char>(trimmed.back())) ||
          trimmed.back() == '#'))
    trimmed.pop_back();
  std::size_t b = 0;
  while (b < trimmed.size() && std::isspace(static_cast<unsigned char>(trimmed[b])))
    ++b;
  trimmed = trimmed.substr(b);
  json j = json::parse(trimmed, nullptr, false);
  if (!j.is_discarded() && !trimmed.empty()) return j;
  throw ParseError("no JSON value found in response: " + excerpt(text));
}

json templated_chat(const ChatClient& client, const TemplateStore& templates,
                    const std::string& template_id,
                    const std::map<std::string, std::string>& slots,
                    int max_attempts, const ReplyValidator& validate) {
  const std::string prompt = templates.render(template_id, slots);
  std::string parse_failure;
  std::string last_raw;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    std::string request = prompt;
    if (attempt > 1) {
      request += "\n\nYour previous response could not be parsed: " +
                 parse_failure + "\nRespond again following the required format.";
    }
    last_raw = chat_complete(client, request);
    try {
      json reply = extract_json_block(last_raw);
      if (validate) {
        std::string problem = validate(reply);
        if (!problem.empty()) {
          parse_failure = problem;
          continue;
        }
      }
      return reply;
    } catch (const ParseError& e) {
      parse_failure = e.what();
    }
  }
  throw ProtocolError("chat reply unparseable after " +
                      std::to_string(max_attempts) + " attempts (" +
                      parse_failure + "); last raw: " + excerpt(last_raw));
}

// ---------------------------------------------------------------------------
// Backends

namespace {

class InProcessBackend final : public Backend {
public:
  explicit InProcessBackend(std::function<Prediction(const Input&)> fn)
      : fn_(std::move(fn)) {}

  std::vector<Prediction> predict(const std::vector<Input>& inputs) override {
    std::vector<Prediction> out;
    out.reserve(inputs.size());
    for (const auto& input : inputs) out.push_back(fn_(input));
    return out;
  }

private:
  std::function<Prediction(const Input&)> fn_;
};

class HttpBackend final : public Backend {
public:
  explicit HttpBackend(std::string base_url) : base_url_(std::move(base_url)) {}

  std::vector<Prediction> predict(const std::vector<Input>& inputs) override {
    json body;
    body["inputs"] = json::array();
    for (const auto& input : inputs) body["inputs"].push_back(input_to_json(input));
    const std::string raw =
        http_post_json(base_url_ + "/predict", canonical_json(body), "");
    json response = json::parse(raw, nullptr, false);
    if (response.is_discarded())
      throw ProtocolError("model endpoint returned invalid JSON: " + excerpt(raw));
    if (!response.contains("labels") || !response["labels"].is_array())
      throw ProtocolError("model response lacks a labels array: " + excerpt(raw));
    const auto& labels = response["labels"];
    std::vector<Prediction> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
      out[i].label = labels[i].get<int>();
    if (response.contains("probabilities") && !response["probabilities"].is_null()) {
      const auto& probs = response["probabilities"];
      if (probs.size() != labels.size())
        throw ProtocolError("probabilities/labels length mismatch");
      for (std::size_t i = 0; i < probs.size(); ++i)
        out[i].probabilities = probs[i].get<std::vector<double>>();
    }
    return out;
  }

private:
  std::string base_url_;
};

class SubprocessBackend final : public Backend {
public:
  explicit SubprocessBackend(std::string command) : command_(std::move(command)) {}

  std::vector<Prediction> predict(const std::vector<Input>& inputs) override {
    std::string stdin_data;
    for (const auto& input : inputs) {
      stdin_data += canonical_json(json{{"input", input_to_json(input)}});
      stdin_data += "\n";
    }
    const std::string stdout_data = run(stdin_data);
    std::vector<Prediction> out;
    std::istringstream lines(stdout_data);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded())
        throw ProtocolError("subprocess emitted invalid JSON: " + excerpt(line));
      out.push_back(prediction_from_json(j));
    }
    if (out.size() != inputs.size())
      throw ProtocolError("subprocess answered " + std::to_string(out.size()) +
                          " of " + std::to_string(inputs.size()) + " inputs");
    return out;
  }

private:
  std::string run(const std::string& stdin_data) const {
    int in_pipe[2], out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
      throw TransportError("pipe() failed for subprocess backend");
    pid_t pid = fork();
    if (pid < 0) throw TransportError("fork() failed for subprocess backend");
    if (pid == 0) {
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      close(in_pipe[0]); close(in_pipe[1]);
      close(out_pipe[0]); close(out_pipe[1]);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);

    // Writer thread avoids deadlock when both pipes fill up.
    std::thread writer([fd = in_pipe[1], &stdin_data] {
      std::size_t off = 0;
      while (off < stdin_data.size()) {
        ssize_t n = write(fd, stdin_data.data() + off, stdin_data.size() - off);
        if (n <= 0) break;
        off += static_cast<std::size_t>(n);
      }
      close(fd);
    });

    std::string output;
    char buf[4096];
    ssize_t n;
    while ((n = read(out_pipe[0], buf, sizeof buf)) > 0)
      output.append(buf, static_cast<std::size_t>(n));
    close(out_pipe[0]);
    writer.join();

    int status = 0;
    waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
      throw TransportError("subprocess backend '" + command_ +
                           "' exited with status " + std::to_string(status));
    return output;
  }

  std::string command_;
};

class ReplayBackend final : public Backend {
public:
  explicit ReplayBackend(std::string dir) : dir_(std::move(dir)) {}

  std::vector<Prediction> predict(const std::vector<Input>& inputs) override {
    std::vector<Prediction> out;
    out.reserve(inputs.size());
    for (const auto& input : inputs) {
      const std::string digest = input_digest(input);
      const fs::path path = fs::path(dir_) / (digest + ".json");
      if (!fs::exists(path))
        throw ProtocolError("fixture miss: no recorded prediction for digest " +
                            digest);
      std::ifstream in(path);
      json j = json::parse(in, nullptr, false);
      if (j.is_discarded())
        throw ParseError("fixture " + path.string() + " holds invalid JSON");
      out.push_back(prediction_from_json(j));
    }
    return out;
  }

private:
  std::string dir_;
};

class CachingBackend final : public Backend {
public:
  CachingBackend(std::shared_ptr<Backend> inner,
                 std::shared_ptr<PredictionCache> cache, std::string handle_id)
      : inner_(std::move(inner)),
        cache_(std::move(cache)),
        handle_id_(std::move(handle_id)) {}

  std::vector<Prediction> predict(const std::vector<Input>& inputs) override {
    std::vector<Prediction> out(inputs.size());
    std::vector<std::size_t> miss_indices;
    std::vector<Input> misses;
    std::vector<std::string> digests(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      digests[i] = input_digest(inputs[i]);
      if (auto hit = cache_->lookup(handle_id_, digests[i])) {
        out[i] = *hit;
      } else {
        miss_indices.push_back(i);
        misses.push_back(inputs[i]);
      }
    }
    if (!misses.empty()) {
      auto fresh = inner_->predict(misses);
      if (fresh.size() != misses.size())
        throw ProtocolError("backend answered " + std::to_string(fresh.size()) +
                            " of " + std::to_string(misses.size()) + " inputs");
      for (std::size_t k = 0; k < miss_indices.size(); ++k) {
        const std::size_t i = miss_indices[k];
        out[i] = fresh[k];
        if (fresh[k].ok()) cache_->store(handle_id_, digests[i], fresh[k]);
      }
    }
    return out;
  }

private:
  std::shared_ptr<Backend> inner_;
  std::shared_ptr<PredictionCache> cache_;
  std::string handle_id_;
};

class LlmClassifierBackend final : public Backend {
public:
  LlmClassifierBackend(ChatClient client, TemplateStore templates,
                       std::string template_id)
      : client_(std::move(client)),
        templates_(std::move(templates)),
        template_id_(std::move(template_id)) {}

  std::vector<Prediction> predict(const std::vector<Input>& inputs) override {
    std::vector<Prediction> out;
    out.reserve(inputs.size());
    for (const auto& input : inputs) {
      const auto* text = std::get_if<std::string>(&input);
      if (!text)
        throw ContractError("LLM classifier backend accepts text inputs only");
      json reply = templated_chat(client_, templates_, template_id_,
                                  {{"input", *text}});
      if (!reply.is_number_integer())
        throw ProtocolError("classifier reply is not an integer label: " +
                            reply.dump());
      Prediction p;
      p.label = reply.get<int>();
      out.push_back(std::move(p));
    }
    return out;
  }

private:
  ChatClient client_;
  TemplateStore templates_;
  std::string template_id_;
};

}  // namespace

std::shared_ptr<Backend> make_inprocess_backend(
    std::function<Prediction(const Input&)> fn) {
  return std::make_shared<InProcessBackend>(std::move(fn));
}

std::shared_ptr<Backend> make_http_backend(std::string base_url) {
  return std::make_shared<HttpBackend>(std::move(base_url));
}

std::shared_ptr<Backend> make_subprocess_backend(std::string command) {
  return std::make_shared<SubprocessBackend>(std::move(command));
}

std::shared_ptr<Backend> make_replay_backend(std::string fixture_dir) {
  return std::make_shared<ReplayBackend>(std::move(fixture_dir));
}

std::shared_ptr<Backend> make_caching_backend(std::shared_ptr<Backend> inner,
                                              std::shared_ptr<PredictionCache> cache,
                                              std::string handle_id) {
  if (!inner) throw ConfigError("caching backend needs an inner backend");
  if (!cache) throw ConfigError("caching backend needs a cache");
  return std::make_shared<CachingBackend>(std::move(inner), std::move(cache),
                                          std::move(handle_id));
}

std::shared_ptr<Backend> make_llm_classifier_backend(ChatClient client,
                                                     TemplateStore templates,
                                                     std::string template_id) {
  return std::make_shared<LlmClassifierBackend>(
      std::move(client), std::move(templates), std::move(template_id));
}

std::string write_model_fixture(const std::string& fixture_dir,
                                const Input& input,
                                const Prediction& prediction) {
  const std::string digest = input_digest(input);
  fs::create_directories(fixture_dir);
  std::ofstream out(fs::path(fixture_dir) / (digest + ".json"));
  out << prediction_to_json(prediction).dump(2) << "\n";
  return digest;
}

}  // namespace pex::adapters
