#include "rageval/dense.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <fmt/format.h>

#include "rageval/error.hpp"

namespace rageval::dense {
namespace {

constexpr char kMagic[8] = {'R', 'G', 'V', 'S', 'T', 'O', 'R', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

void put_string(std::string& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto length = get<std::uint32_t>();
    need(length);
    std::string s(bytes_.substr(pos_, length));
    pos_ += length;
    return s;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto view = bytes_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::kCorruption, "vector store is truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

double dot(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return sum;
}

double bounded(double value) { return std::clamp(value, -1.0, 1.0); }

}  // namespace

double euclidean_norm(std::span<const float> v) { return std::sqrt(dot(v, v)); }

double cosine_similarity(std::span<const float> q, std::span<const float> p) {
  require(q.size() == p.size() && !q.empty(),
          fmt::format("cosine_similarity needs equal non-zero dims, got {} and {}", q.size(), p.size()));
  const double nq = euclidean_norm(q);
  const double np = euclidean_norm(p);
  if (nq == 0.0 || np == 0.0) fail(ErrorCode::kDomain, "cosine similarity of a zero vector is undefined");
  return bounded(dot(q, p) / (nq * np));
}

VectorStore::VectorStore(std::string corpus_id, std::string backend_id, std::size_t dim)
    : corpus_id_(std::move(corpus_id)), backend_id_(std::move(backend_id)), dim_(dim) {
  require(dim_ >= 1, "vector store dim must be >= 1");
}

void VectorStore::add(std::string passage_id, std::span<const float> values) {
  if (values.size() != dim_) {
    fail(ErrorCode::kDimensionDrift,
         fmt::format("vector for '{}' has dim {}, store expects {}", passage_id, values.size(), dim_));
  }
  for (float x : values) {
    if (!std::isfinite(x)) fail(ErrorCode::kDomain, fmt::format("vector for '{}' is not finite", passage_id));
  }
  const double n = euclidean_norm(values);
  if (n == 0.0) fail(ErrorCode::kDomain, fmt::format("vector for '{}' is all zeros", passage_id));
  ids_.push_back(std::move(passage_id));
  data_.insert(data_.end(), values.begin(), values.end());
  norms_.push_back(n);
}

std::span<const float> VectorStore::vector(std::size_t i) const {
  return std::span<const float>(data_).subspan(i * dim_, dim_);
}

std::vector<ScoredHit> VectorStore::search(std::span<const float> query, std::size_t k) const {
  require(k >= 1, "dense search requires k >= 1");
  require(query.size() == dim_,
          fmt::format("query has dim {}, store '{}' has dim {}", query.size(), backend_id_, dim_));
  const double query_norm = euclidean_norm(query);
  if (query_norm == 0.0) fail(ErrorCode::kDomain, "query embedding is all zeros");
  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    scored.emplace_back(ids_[i], bounded(dot(query, vector(i)) / (query_norm * norms_[i])));
  }
  return rank_top_k(std::move(scored), k);
}

void VectorStore::scale(float factor) {
  require(factor > 0.0F, "scale factor must be positive");
  for (auto& x : data_) x *= factor;
  for (std::size_t i = 0; i < size(); ++i) norms_[i] = euclidean_norm(vector(i));
}

std::string VectorStore::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  put<std::uint64_t>(out, ids_.size());
  put_string(out, corpus_id_);
  put_string(out, backend_id_);
  for (const auto& id : ids_) put_string(out, id);
  for (std::size_t i = 0; i < size(); ++i) {
    put<double>(out, norms_[i]);
    const auto v = vector(i);
    out.append(reinterpret_cast<const char*>(v.data()), v.size_bytes());
  }
  return out;
}

VectorStore VectorStore::deserialize(std::string_view bytes) {
  Reader reader(bytes);
  if (reader.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    fail(ErrorCode::kCorruption, "not a vector store file");
  }
  if (reader.get<std::uint32_t>() != kVersion) fail(ErrorCode::kCorruption, "unsupported vector store version");
  const auto dim = reader.get<std::uint32_t>();
  const auto count = reader.get<std::uint64_t>();
  VectorStore store;
  store.corpus_id_ = reader.get_string();
  store.backend_id_ = reader.get_string();
  store.dim_ = dim;
  if (dim == 0) fail(ErrorCode::kCorruption, "vector store declares dim 0");
  for (std::uint64_t i = 0; i < count; ++i) store.ids_.push_back(reader.get_string());
  store.data_.resize(count * dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    store.norms_.push_back(reader.get<double>());
    const auto raw = reader.take(dim * sizeof(float));
    std::memcpy(store.data_.data() + i * dim, raw.data(), raw.size());
  }
  if (!reader.done()) fail(ErrorCode::kCorruption, "trailing bytes after vector records");
  return store;
}

std::vector<Json> VectorStore::dump() const {
  std::vector<Json> lines;
  lines.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    Json j;
    j["corpus_id"] = corpus_id_;
    j["backend_id"] = backend_id_;
    j["passage_id"] = ids_[i];
    j["norm"] = norms_[i];
    const auto v = vector(i);
    j["vector"] = std::vector<float>(v.begin(), v.end());
    lines.push_back(std::move(j));
  }
  return lines;
}

VectorStore embed_corpus(std::span<const corpus::Passage> passages, std::string_view corpus_id,
                         backend::BackendClient& client, std::size_t batch_size) {
  require(batch_size >= 1, "batch_size must be >= 1");
  if (passages.empty()) fail(ErrorCode::kPrecondition, fmt::format("corpus '{}' has no passages", corpus_id));

  const std::string prefix = client.profile().passage_prefix.value_or("");
  const std::size_t batches = (passages.size() + batch_size - 1) / batch_size;
  std::vector<std::vector<backend::Vector>> results(batches);
  parallel_for(batches, static_cast<std::size_t>(client.profile().max_in_flight), [&](std::size_t b) {
    std::vector<std::string> texts;
    const std::size_t end = std::min(passages.size(), (b + 1) * batch_size);
    for (std::size_t i = b * batch_size; i < end; ++i) texts.push_back(prefix + passages[i].text);
    results[b] = client.embed(texts);
  });

  const std::size_t dim = results.front().front().size();
  VectorStore store(std::string(corpus_id), client.id(), dim);
  std::size_t done = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    for (const auto& v : results[b]) {
      if (v.size() != dim) {
        fail(ErrorCode::kDimensionDrift,
             fmt::format("backend '{}' changed dimension from {} to {} after {} of {} passages; "
                         "partial store discarded",
                         client.id(), dim, v.size(), done, passages.size()));
      }
      store.add(passages[done].passage_id, v);
      ++done;
    }
  }
  return store;
}

std::vector<ScoredHit> dense_search(const VectorStore& store, std::string_view query_text,
                                    backend::BackendClient& client, std::size_t k) {
  if (store.backend_id() != client.id()) {
    fail(ErrorCode::kConfig, fmt::format("vector store was built by '{}', query backend is '{}'",
                                         store.backend_id(), client.id()));
  }
  const std::string text = client.profile().query_prefix.value_or("") + std::string(query_text);
  const auto vectors = client.embed({text});
  return store.search(vectors.front(), k);
}

std::filesystem::path store_path(const std::filesystem::path& store_root, std::string_view corpus_id,
                                 std::string_view backend_id) {
  return corpus::corpus_dir(store_root, corpus_id) / "vectors" / (std::string(backend_id) + ".vec");
}

void write_store(const std::filesystem::path& path, const VectorStore& store) {
  write_file(path, store.serialize());
}

VectorStore load_store(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::kNotFound, fmt::format("vector store {} does not exist", path.string()));
  }
  return VectorStore::deserialize(read_file(path));
}

}  // namespace rageval::dense
