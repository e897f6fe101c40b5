#include "rageval/backend.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include <fmt/format.h>

#include "rageval/error.hpp"
#include "rageval/text.hpp"

namespace rageval::backend {
namespace {

std::map<std::string, std::string> parse_stub_options(std::string_view url) {
  std::map<std::string, std::string> options;
  const auto q = url.find('?');
  if (q == std::string_view::npos) return options;
  std::string_view rest = url.substr(q + 1);
  while (!rest.empty()) {
    const auto amp = rest.find('&');
    const auto pair = rest.substr(0, amp);
    const auto eq = pair.find('=');
    if (eq == std::string_view::npos) {
      options[std::string(pair)] = "";
    } else {
      options[std::string(pair.substr(0, eq))] = std::string(pair.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
  }
  return options;
}

std::size_t parse_count(const std::string& value, const char* name) {
  try {
    std::size_t used = 0;
    const auto parsed = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(name);
    return parsed;
  } catch (const std::exception&) {
    fail(ErrorCode::kConfig, fmt::format("stub option '{}' expects an integer, got '{}'", name, value));
  }
}

double parse_real(const std::string& value, const char* name) {
  try {
    std::size_t used = 0;
    const auto parsed = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(name);
    return parsed;
  } catch (const std::exception&) {
    fail(ErrorCode::kConfig, fmt::format("stub option '{}' expects a number, got '{}'", name, value));
  }
}

double cosine(const Vector& a, const Vector& b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

std::string first_sentence(std::string_view passage) {
  const auto stop = passage.find(". ");
  if (stop == std::string_view::npos) return std::string(passage);
  return std::string(passage.substr(0, stop + 1));
}

}  // namespace

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::kEmbed: return "embed";
    case Kind::kRerank: return "rerank";
    case Kind::kGenerate: return "generate";
  }
  return "embed";
}

Kind kind_from_string(std::string_view name) {
  if (name == "embed") return Kind::kEmbed;
  if (name == "rerank") return Kind::kRerank;
  if (name == "generate") return Kind::kGenerate;
  fail(ErrorCode::kConfig, fmt::format("unknown backend kind '{}'", name));
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void validate(const BackendProfile& profile) {
  if (profile.backend_id.empty()) fail(ErrorCode::kConfig, "backend_id must not be empty");
  if (profile.base_url.empty()) {
    fail(ErrorCode::kConfig, fmt::format("backend '{}' has no base_url", profile.backend_id));
  }
  if (profile.max_in_flight < 1) {
    fail(ErrorCode::kConfig, fmt::format("backend '{}': max_in_flight must be >= 1", profile.backend_id));
  }
  if (profile.max_retries < 0) {
    fail(ErrorCode::kConfig, fmt::format("backend '{}': max_retries must be >= 0", profile.backend_id));
  }
  if (profile.normalized && profile.kind != Kind::kRerank) {
    fail(ErrorCode::kConfig,
         fmt::format("backend '{}': 'normalized' applies to rerank backends only", profile.backend_id));
  }
  if ((profile.query_prefix || profile.passage_prefix) && profile.kind != Kind::kEmbed) {
    fail(ErrorCode::kConfig,
         fmt::format("backend '{}': prefixes apply to embed backends only", profile.backend_id));
  }
}

Json to_json(const BackendProfile& profile) {
  Json j;
  j["backend_id"] = profile.backend_id;
  j["kind"] = to_string(profile.kind);
  j["base_url"] = profile.base_url;
  j["model_name"] = profile.model_name;
  if (profile.kind == Kind::kRerank) j["normalized"] = profile.normalized;
  if (profile.query_prefix) j["query_prefix"] = *profile.query_prefix;
  if (profile.passage_prefix) j["passage_prefix"] = *profile.passage_prefix;
  j["timeout_ms"] = profile.timeout.count();
  j["max_retries"] = profile.max_retries;
  j["max_in_flight"] = profile.max_in_flight;
  j["retry_backoff_ms"] = profile.retry_backoff.count();
  if (!profile.auth_token_env.empty()) j["auth_token_env"] = profile.auth_token_env;
  return j;
}

BackendProfile profile_from_json(const Json& record) {
  BackendProfile p;
  try {
    p.backend_id = record.at("backend_id").get<std::string>();
    p.kind = kind_from_string(record.at("kind").get<std::string>());
    p.base_url = record.at("base_url").get<std::string>();
    p.model_name = record.value("model_name", p.backend_id);
    if (record.contains("normalized")) p.normalized = record.at("normalized").get<bool>();
    if (record.contains("query_prefix")) p.query_prefix = record.at("query_prefix").get<std::string>();
    if (record.contains("passage_prefix")) {
      p.passage_prefix = record.at("passage_prefix").get<std::string>();
    }
    p.timeout = std::chrono::milliseconds(record.value("timeout_ms", p.timeout.count()));
    p.max_retries = record.value("max_retries", p.max_retries);
    p.max_in_flight = record.value("max_in_flight", p.max_in_flight);
    p.retry_backoff = std::chrono::milliseconds(record.value("retry_backoff_ms", p.retry_backoff.count()));
    p.auth_token_env = record.value("auth_token_env", std::string());
  } catch (const Json::exception& e) {
    fail(ErrorCode::kConfig, fmt::format("malformed backend profile: {}", e.what()));
  }
  validate(p);
  return p;
}

// ---------------------------------------------------------------------------
// HTTP

HttpTransport::HttpTransport(const BackendProfile& profile)
    : timeout_(profile.timeout), auth_token_env_(profile.auth_token_env) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch match;
  if (!std::regex_match(profile.base_url, match, kUrl)) {
    fail(ErrorCode::kConfig, fmt::format("backend '{}': unsupported base_url '{}'", profile.backend_id,
                                         profile.base_url));
  }
  origin_ = match[1].str();
  prefix_ = match[2].str();
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

Json HttpTransport::post(std::string_view path, const Json& body) {
  httplib::Client client(origin_);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  httplib::Headers headers;
  if (!auth_token_env_.empty()) {
    const char* token = std::getenv(auth_token_env_.c_str());
    if (token == nullptr) {
      fail(ErrorCode::kConfig,
           fmt::format("credential variable {} is not set", auth_token_env_));
    }
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const std::string target = prefix_ + std::string(path);
  auto response = client.Post(target, headers, body.dump(), "application/json");
  if (!response) {
    fail(ErrorCode::kTransport, fmt::format("POST {}{} failed: {}", origin_, target,
                                            httplib::to_string(response.error())));
  }
  const int status = response->status;
  if (status == 408 || status == 429 || status >= 500) {
    fail(ErrorCode::kTransport, fmt::format("POST {}{} returned HTTP {}", origin_, target, status));
  }
  if (status != 200) {
    fail(ErrorCode::kProtocol, fmt::format("POST {}{} returned HTTP {}: {}", origin_, target, status,
                                           response->body.substr(0, 200)));
  }
  try {
    return Json::parse(response->body);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::kProtocol, fmt::format("POST {}{} returned invalid JSON: {}", origin_, target, e.what()));
  }
}

// ---------------------------------------------------------------------------
// Stub

StubTransport::StubTransport(const BackendProfile& profile) : StubTransport(profile, Fixture{}) {}

StubTransport::StubTransport(const BackendProfile& profile, Fixture fixture)
    : profile_(profile), fixture_(std::move(fixture)) {
  const auto options = parse_stub_options(profile.base_url);
  for (const auto& [key, value] : options) {
    if (key == "dim") {
      dim_ = parse_count(value, "dim");
      if (dim_ == 0) fail(ErrorCode::kConfig, "stub dim must be >= 1");
    } else if (key == "persona") {
      if (value != "echo" && value != "judge") {
        fail(ErrorCode::kConfig, fmt::format("unknown stub persona '{}'", value));
      }
      persona_ = value;
    } else if (key == "fixture") {
      auto loaded = load_fixture(Json::parse(read_file(value)));
      fixture_.rerank.insert(fixture_.rerank.end(), loaded.rerank.begin(), loaded.rerank.end());
      fixture_.generate.insert(fixture_.generate.end(), loaded.generate.begin(), loaded.generate.end());
    } else if (key == "fail_first") {
      fail_first_ = parse_count(value, "fail_first");
    } else if (key == "drift_after") {
      drift_after_ = parse_count(value, "drift_after");
    } else if (key == "delay_ms") {
      delay_ = std::chrono::milliseconds(parse_count(value, "delay_ms"));
    } else if (key == "logit_scale") {
      logit_scale_ = parse_real(value, "logit_scale");
    } else if (key == "logit_bias") {
      logit_bias_ = parse_real(value, "logit_bias");
    } else {
      fail(ErrorCode::kConfig, fmt::format("unknown stub option '{}'", key));
    }
  }
}

StubTransport::Fixture StubTransport::load_fixture(const Json& record) {
  Fixture fixture;
  try {
    for (const auto& e : record.value("rerank", Json::array())) {
      fixture.rerank.push_back({e.at("query").get<std::string>(), e.at("passage").get<std::string>(),
                                e.at("score").get<double>()});
    }
    for (const auto& e : record.value("generate", Json::array())) {
      GenerateEntry entry;
      entry.prompt_sha256 = e.value("prompt_sha256", std::string());
      entry.contains = e.value("contains", std::vector<std::string>());
      entry.response = e.at("response").get<std::string>();
      fixture.generate.push_back(std::move(entry));
    }
  } catch (const Json::exception& ex) {
    fail(ErrorCode::kConfig, fmt::format("malformed stub fixture: {}", ex.what()));
  }
  return fixture;
}

Json StubTransport::post(std::string_view path, const Json& body) {
  const std::size_t call = calls_.fetch_add(1);
  if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
  if (call < fail_first_) {
    fail(ErrorCode::kTransport, fmt::format("stub: injected transport failure #{}", call + 1));
  }
  if (path == "/v1/embed") return embed(body);
  if (path == "/v1/rerank") return rerank(body);
  if (path == "/v1/generate") return generate(body);
  fail(ErrorCode::kProtocol, fmt::format("stub: unknown endpoint {}", path));
}

Vector StubTransport::embed_text(std::string_view text, std::size_t dim) const {
  std::vector<double> acc(dim, 0.0);
  auto add_seeded = [&](std::string_view key) {
    Rng rng(fnv1a64(profile_.model_name + '\x1f' + std::string(key)));
    for (auto& x : acc) x += rng.normal();
  };
  const auto terms = text::analyze(text);
  if (terms.empty()) {
    add_seeded(text);
  } else {
    for (const auto& term : terms) add_seeded(term);
  }
  double norm = 0.0;
  for (double x : acc) norm += x * x;
  norm = std::sqrt(norm);
  Vector out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] / norm);
  return out;
}

Json StubTransport::embed(const Json& body) {
  const auto call = embed_calls_.fetch_add(1);
  const std::size_t dim = (drift_after_ && call >= *drift_after_) ? dim_ * 2 : dim_;
  Json vectors = Json::array();
  for (const auto& t : body.at("texts")) vectors.push_back(embed_text(t.get<std::string>(), dim));
  Json out;
  out["vectors"] = std::move(vectors);
  out["dim"] = dim;
  return out;
}

Json StubTransport::rerank(const Json& body) {
  const auto query = body.at("query").get<std::string>();
  const auto query_vector = embed_text(query, dim_);
  Json scores = Json::array();
  for (const auto& p : body.at("passages")) {
    const auto passage = p.get<std::string>();
    std::optional<double> injected;
    for (const auto& entry : fixture_.rerank) {
      if (entry.query == query && entry.passage == passage) {
        injected = entry.score;
        break;
      }
    }
    if (injected) {
      scores.push_back(*injected);
      continue;
    }
    const double logit = logit_scale_ * cosine(query_vector, embed_text(passage, dim_)) + logit_bias_;
    scores.push_back(profile_.normalized ? logistic(logit) : logit);
  }
  Json out;
  out["scores"] = std::move(scores);
  out["normalized"] = profile_.normalized;
  return out;
}

Json StubTransport::generate(const Json& body) {
  const auto prompt = body.at("prompt").get<std::string>();
  const auto digest = sha256_hex(prompt);
  for (const auto& entry : fixture_.generate) {
    if (!entry.prompt_sha256.empty()) {
      if (entry.prompt_sha256 == digest) return Json{{"text", entry.response}};
      continue;
    }
    const bool all = std::all_of(entry.contains.begin(), entry.contains.end(),
                                 [&](const std::string& s) { return contains(prompt, s); });
    if (all) return Json{{"text", entry.response}};
  }

  const std::uint64_t h = fnv1a64(profile_.model_name + '\x1f' + prompt);
  std::string text;
  if (persona_ == "judge") {
    if (contains(prompt, "between 0 and 3")) {
      text = fmt::format("{}", h % 4);
    } else if (contains(prompt, "between 1 and 5")) {
      text = fmt::format("Score: {}", 1 + h % 5);
    } else if (contains(prompt, "yes or no")) {
      text = (h % 2 == 0) ? "yes" : "no";
    } else {
      text = "I cannot rate this.";
    }
  } else {
    const auto marker = prompt.find("CONTEXT:\n[1] ");
    if (marker == std::string::npos) {
      text = "I do not know the answer.";
    } else {
      const auto start = marker + std::string_view("CONTEXT:\n[1] ").size();
      const auto stop = prompt.find('\n', start);
      text = first_sentence(std::string_view(prompt).substr(start, stop - start));
    }
  }
  return Json{{"text", text}};
}

// ---------------------------------------------------------------------------
// Client

void InFlightLimiter::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return active_ < limit_; });
  ++active_;
  peak_ = std::max(peak_, active_);
}

void InFlightLimiter::release() {
  {
    std::lock_guard lock(mutex_);
    --active_;
  }
  cv_.notify_one();
}

int InFlightLimiter::peak() const {
  std::lock_guard lock(mutex_);
  return peak_;
}

BackendClient::BackendClient(BackendProfile profile, std::shared_ptr<Transport> transport)
    : profile_(std::move(profile)), transport_(std::move(transport)), limiter_(profile_.max_in_flight) {
  validate(profile_);
}

void BackendClient::expect_kind(Kind kind) const {
  if (profile_.kind != kind) {
    fail(ErrorCode::kConfig, fmt::format("backend '{}' is a {} backend, not {}", profile_.backend_id,
                                         to_string(profile_.kind), to_string(kind)));
  }
}

Json BackendClient::call(std::string_view path, const Json& body) {
  struct Slot {
    InFlightLimiter& limiter;
    explicit Slot(InFlightLimiter& l) : limiter(l) { limiter.acquire(); }
    ~Slot() { limiter.release(); }
  } slot(limiter_);

  auto backoff = profile_.retry_backoff;
  for (int attempt = 0;; ++attempt) {
    attempts_.fetch_add(1);
    try {
      return transport_->post(path, body);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTransport || attempt >= profile_.max_retries) {
        if (e.code() == ErrorCode::kTransport) {
          fail(ErrorCode::kTransport, fmt::format("backend '{}': giving up after {} attempts: {}",
                                                  profile_.backend_id, attempt + 1, e.what()));
        }
        throw;
      }
    }
    if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

std::vector<Vector> BackendClient::embed(const std::vector<std::string>& texts) {
  expect_kind(Kind::kEmbed);
  if (texts.empty()) return {};
  Json body;
  body["model"] = profile_.model_name;
  body["texts"] = texts;
  const Json response = call("/v1/embed", body);
  try {
    const auto& vectors = response.at("vectors");
    const auto dim = response.at("dim").get<std::size_t>();
    if (vectors.size() != texts.size()) {
      fail(ErrorCode::kProtocol, fmt::format("backend '{}' returned {} vectors for {} texts",
                                             profile_.backend_id, vectors.size(), texts.size()));
    }
    if (dim == 0) fail(ErrorCode::kProtocol, fmt::format("backend '{}' reported dim 0", profile_.backend_id));
    std::vector<Vector> out;
    out.reserve(vectors.size());
    for (const auto& v : vectors) {
      if (v.size() != dim) {
        fail(ErrorCode::kProtocol, fmt::format("backend '{}' returned a vector of dim {} (declared {})",
                                               profile_.backend_id, v.size(), dim));
      }
      Vector values = v.get<Vector>();
      for (float x : values) {
        if (!std::isfinite(x)) {
          fail(ErrorCode::kProtocol, fmt::format("backend '{}' returned a non-finite value", profile_.backend_id));
        }
      }
      out.push_back(std::move(values));
    }
    return out;
  } catch (const Json::exception& e) {
    fail(ErrorCode::kProtocol, fmt::format("backend '{}': malformed embed response: {}", profile_.backend_id, e.what()));
  }
}

RerankResponse BackendClient::rerank(std::string_view query, const std::vector<std::string>& passages) {
  expect_kind(Kind::kRerank);
  if (passages.empty()) return {{}, profile_.normalized};
  Json body;
  body["model"] = profile_.model_name;
  body["query"] = query;
  body["passages"] = passages;
  const Json response = call("/v1/rerank", body);
  try {
    RerankResponse out;
    out.scores = response.at("scores").get<std::vector<double>>();
    out.normalized = response.at("normalized").get<bool>();
    if (out.scores.size() != passages.size()) {
      fail(ErrorCode::kProtocol, fmt::format("backend '{}' returned {} scores for {} passages",
                                             profile_.backend_id, out.scores.size(), passages.size()));
    }
    for (double s : out.scores) {
      if (!std::isfinite(s)) {
        fail(ErrorCode::kProtocol, fmt::format("backend '{}' returned a non-finite score", profile_.backend_id));
      }
    }
    return out;
  } catch (const Json::exception& e) {
    fail(ErrorCode::kProtocol, fmt::format("backend '{}': malformed rerank response: {}", profile_.backend_id, e.what()));
  }
}

std::string BackendClient::generate(std::string_view prompt, const GenerationSettings& settings) {
  expect_kind(Kind::kGenerate);
  Json body;
  body["model"] = profile_.model_name;
  body["prompt"] = prompt;
  body["temperature"] = settings.temperature;
  body["max_tokens"] = settings.max_tokens;
  const Json response = call("/v1/generate", body);
  try {
    return response.at("text").get<std::string>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::kProtocol, fmt::format("backend '{}': malformed generate response: {}", profile_.backend_id, e.what()));
  }
}

std::shared_ptr<BackendClient> connect(const BackendProfile& profile) {
  validate(profile);
  std::shared_ptr<Transport> transport;
  if (profile.is_stub()) {
    transport = std::make_shared<StubTransport>(profile);
  } else {
    transport = std::make_shared<HttpTransport>(profile);
  }
  return std::make_shared<BackendClient>(profile, std::move(transport));
}

void BackendRegistry::add(std::shared_ptr<BackendClient> client) {
  const auto id = client->id();
  if (!clients_.emplace(id, std::move(client)).second) {
    fail(ErrorCode::kConfig, fmt::format("duplicate backend_id '{}'", id));
  }
}

std::shared_ptr<BackendClient> BackendRegistry::get(std::string_view backend_id) const {
  const auto it = clients_.find(backend_id);
  if (it == clients_.end()) fail(ErrorCode::kConfig, fmt::format("unknown backend '{}'", backend_id));
  return it->second;
}

bool BackendRegistry::contains(std::string_view backend_id) const {
  return clients_.find(backend_id) != clients_.end();
}

}  // namespace rageval::backend
