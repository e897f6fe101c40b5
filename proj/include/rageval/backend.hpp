#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rageval/util.hpp"

namespace rageval::backend {

enum class Kind { kEmbed, kRerank, kGenerate };

std::string_view to_string(Kind kind);
Kind kind_from_string(std::string_view name);

/// Wire-level description of one embedding, rerank or generation service.
/// A base_url starting with "stub:" selects the in-process stub.
struct BackendProfile {
  std::string backend_id;
  Kind kind = Kind::kEmbed;
  std::string base_url;
  std::string model_name;
  bool normalized = false;                    // rerank only
  std::optional<std::string> query_prefix;    // embed only
  std::optional<std::string> passage_prefix;  // embed only
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  int max_in_flight = 4;
  std::chrono::milliseconds retry_backoff{200};
  std::string auth_token_env;

  bool is_stub() const { return base_url.rfind("stub:", 0) == 0; }
};

/// Throws kConfig when kind-specific fields appear on the wrong kind or the
/// numeric limits are out of range.
void validate(const BackendProfile& profile);
Json to_json(const BackendProfile& profile);
BackendProfile profile_from_json(const Json& record);

struct GenerationSettings {
  double temperature = 0.0;
  int max_tokens = 512;
};

struct RerankResponse {
  std::vector<double> scores;
  bool normalized = false;
};

using Vector = std::vector<float>;

/// Carries one JSON request to an endpoint path ("/v1/embed", ...) and returns
/// the decoded JSON response. Retryable failures throw ErrorCode::kTransport.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual Json post(std::string_view path, const Json& body) = 0;
};

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(const BackendProfile& profile);
  Json post(std::string_view path, const Json& body) override;

 private:
  std::string origin_;
  std::string prefix_;
  std::chrono::milliseconds timeout_;
  std::string auth_token_env_;
};

/// Deterministic in-process implementation of the wire protocol.
///
/// embed: hashed bag of analyzer terms seeded by model_name, normalized to the
///   unit sphere (dim from `?dim=`, default 64).
/// rerank: injected fixture score when the (query, passage) pair is listed,
///   otherwise logit_scale * cosine(stub embeddings) + logit_bias; a profile
///   declaring normalized output gets the logistic of that value.
/// generate: fixture lookup (prompt sha256 or all-substrings match), else a
///   persona: "echo" answers with the first sentence of the first context
///   passage, "judge" emits a hash-derived rating on the scale the prompt
///   asks for.
///
/// URL options: dim, persona, fixture (path to JSON), fail_first, drift_after,
/// delay_ms, logit_scale, logit_bias.
class StubTransport final : public Transport {
 public:
  struct RerankEntry {
    std::string query;
    std::string passage;
    double score = 0.0;
  };
  struct GenerateEntry {
    std::string prompt_sha256;          // exact match when non-empty
    std::vector<std::string> contains;  // otherwise every string must occur
    std::string response;
  };
  struct Fixture {
    std::vector<RerankEntry> rerank;
    std::vector<GenerateEntry> generate;
  };

  explicit StubTransport(const BackendProfile& profile);
  StubTransport(const BackendProfile& profile, Fixture fixture);

  Json post(std::string_view path, const Json& body) override;

  std::size_t calls() const { return calls_.load(); }
  std::size_t dim() const { return dim_; }

  static Fixture load_fixture(const Json& record);

 private:
  Json embed(const Json& body);
  Json rerank(const Json& body);
  Json generate(const Json& body);
  Vector embed_text(std::string_view text, std::size_t dim) const;

  BackendProfile profile_;
  Fixture fixture_;
  std::size_t dim_ = 64;
  std::string persona_ = "echo";
  std::size_t fail_first_ = 0;
  std::optional<std::size_t> drift_after_;
  std::chrono::milliseconds delay_{0};
  double logit_scale_ = 8.0;
  double logit_bias_ = -2.0;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> embed_calls_{0};
};

/// Caps the number of outstanding requests and records the peak.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit) : limit_(limit) {}
  void acquire();
  void release();
  int peak() const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  int limit_;
  int active_ = 0;
  int peak_ = 0;
};

/// Protocol client shared by concurrent callers. Every request passes through
/// the in-flight limiter and is attempted at most 1 + max_retries times.
class BackendClient {
 public:
  BackendClient(BackendProfile profile, std::shared_ptr<Transport> transport);

  std::vector<Vector> embed(const std::vector<std::string>& texts);
  RerankResponse rerank(std::string_view query, const std::vector<std::string>& passages);
  std::string generate(std::string_view prompt, const GenerationSettings& settings = {});

  const BackendProfile& profile() const { return profile_; }
  const std::string& id() const { return profile_.backend_id; }
  int peak_in_flight() const { return limiter_.peak(); }
  std::size_t attempts() const { return attempts_.load(); }

 private:
  Json call(std::string_view path, const Json& body);
  void expect_kind(Kind kind) const;

  BackendProfile profile_;
  std::shared_ptr<Transport> transport_;
  InFlightLimiter limiter_;
  std::atomic<std::size_t> attempts_{0};
};

/// Builds a client with the transport implied by the profile's base_url.
std::shared_ptr<BackendClient> connect(const BackendProfile& profile);

class BackendRegistry {
 public:
  void add(std::shared_ptr<BackendClient> client);
  std::shared_ptr<BackendClient> get(std::string_view backend_id) const;
  bool contains(std::string_view backend_id) const;

 private:
  std::map<std::string, std::shared_ptr<BackendClient>, std::less<>> clients_;
};

double logistic(double x);

}  // namespace rageval::backend
