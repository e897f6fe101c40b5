#include "rageval/corpus.hpp"

#include <algorithm>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "rageval/error.hpp"
#include "rageval/text.hpp"

namespace rageval::corpus {
namespace {

constexpr int kManifestVersion = 1;

struct Unit {
  std::size_t begin;
  std::size_t end;
  std::size_t tokens;
};

// Sentences that fit the budget stay whole; longer ones become token windows.
std::vector<Unit> packing_units(const text::NormalizedText& normalized, std::size_t budget) {
  std::vector<Unit> units;
  const std::string_view body = normalized.text;
  for (const auto& sentence : text::split_sentences(normalized)) {
    const auto tokens = text::tokenize(body.substr(sentence.begin, sentence.size()));
    if (tokens.empty()) continue;
    if (tokens.size() <= budget) {
      units.push_back({sentence.begin, sentence.end, tokens.size()});
      continue;
    }
    for (std::size_t first = 0; first < tokens.size(); first += budget) {
      const std::size_t last = std::min(first + budget, tokens.size());
      units.push_back({sentence.begin + tokens[first].begin, sentence.begin + tokens[last - 1].end,
                       last - first});
    }
  }
  return units;
}

}  // namespace

PassageTable::PassageTable(std::vector<Passage> passages) : passages_(std::move(passages)) {
  std::sort(passages_.begin(), passages_.end(), [](const Passage& a, const Passage& b) {
    return std::tie(a.doc_id, a.seq) < std::tie(b.doc_id, b.seq);
  });
  for (std::size_t i = 0; i < passages_.size(); ++i) {
    if (!by_id_.emplace(passages_[i].passage_id, i).second) {
      fail(ErrorCode::kPrecondition, fmt::format("duplicate passage_id '{}'", passages_[i].passage_id));
    }
  }
}

const Passage* PassageTable::find(std::string_view passage_id) const {
  const auto it = by_id_.find(passage_id);
  return it == by_id_.end() ? nullptr : &passages_[it->second];
}

const Passage& PassageTable::at(std::string_view passage_id) const {
  const auto* p = find(passage_id);
  if (p == nullptr) fail(ErrorCode::kNotFound, fmt::format("unknown passage '{}'", passage_id));
  return *p;
}

std::string make_passage_id(std::string_view doc_id, std::size_t seq) {
  return fmt::format("{}#{:05}", doc_id, seq);
}

std::filesystem::path corpus_dir(const std::filesystem::path& store_root, std::string_view corpus_id) {
  return store_root / std::string(corpus_id);
}

std::vector<Passage> chunk_document(const Document& document, std::size_t chunk_budget) {
  require(chunk_budget >= kMinChunkBudget,
          fmt::format("chunk_budget must be >= {}, got {}", kMinChunkBudget, chunk_budget));
  const auto normalized = text::normalize(document.text);
  const std::string_view body = normalized.text;

  std::vector<Passage> passages;
  auto emit = [&](std::size_t begin, std::size_t end) {
    Passage p;
    p.doc_id = document.doc_id;
    p.seq = passages.size();
    p.passage_id = make_passage_id(document.doc_id, p.seq);
    p.text = std::string(body.substr(begin, end - begin));
    p.token_count = text::count_tokens(p.text);
    p.chunk_budget = chunk_budget;
    passages.push_back(std::move(p));
  };

  std::size_t chunk_begin = 0;
  std::size_t chunk_end = 0;
  std::size_t chunk_tokens = 0;
  for (const auto& unit : packing_units(normalized, chunk_budget)) {
    if (chunk_tokens > 0 && chunk_tokens + unit.tokens > chunk_budget) {
      emit(chunk_begin, chunk_end);
      chunk_tokens = 0;
    }
    if (chunk_tokens == 0) chunk_begin = unit.begin;
    chunk_end = unit.end;
    chunk_tokens += unit.tokens;
  }
  if (chunk_tokens > 0) emit(chunk_begin, chunk_end);
  return passages;
}

Json to_json(const Passage& passage) {
  Json j;
  j["passage_id"] = passage.passage_id;
  j["doc_id"] = passage.doc_id;
  j["seq"] = passage.seq;
  j["text"] = passage.text;
  j["token_count"] = passage.token_count;
  j["chunk_budget"] = passage.chunk_budget;
  return j;
}

Passage passage_from_json(const Json& record) {
  try {
    Passage p;
    p.passage_id = record.at("passage_id").get<std::string>();
    p.doc_id = record.at("doc_id").get<std::string>();
    p.seq = record.at("seq").get<std::size_t>();
    p.text = record.at("text").get<std::string>();
    p.token_count = record.at("token_count").get<std::size_t>();
    p.chunk_budget = record.at("chunk_budget").get<std::size_t>();
    return p;
  } catch (const Json::exception& e) {
    fail(ErrorCode::kCorruption, fmt::format("malformed passage record: {}", e.what()));
  }
}

Json to_json(const CorpusManifest& manifest) {
  Json j;
  j["version"] = kManifestVersion;
  j["corpus_id"] = manifest.corpus_id;
  j["chunk_budget"] = manifest.chunk_budget;
  j["tokenizer_id"] = manifest.tokenizer_id;
  j["segmentation"] = manifest.segmentation;
  j["passage_count"] = manifest.passage_count;
  j["doc_count"] = manifest.doc_count;
  j["checksum"] = manifest.checksum;
  return j;
}

CorpusManifest manifest_from_json(const Json& record) {
  try {
    if (record.at("version").get<int>() != kManifestVersion) {
      fail(ErrorCode::kCorruption, "unsupported manifest version");
    }
    CorpusManifest m;
    m.corpus_id = record.at("corpus_id").get<std::string>();
    m.chunk_budget = record.at("chunk_budget").get<std::size_t>();
    m.tokenizer_id = record.at("tokenizer_id").get<std::string>();
    m.segmentation = record.at("segmentation").get<std::string>();
    m.passage_count = record.at("passage_count").get<std::size_t>();
    m.doc_count = record.at("doc_count").get<std::size_t>();
    m.checksum = record.at("checksum").get<std::string>();
    return m;
  } catch (const Json::exception& e) {
    fail(ErrorCode::kCorruption, fmt::format("malformed manifest: {}", e.what()));
  }
}

IngestResult ingest(std::span<const Document> documents, std::string_view corpus_id,
                    std::size_t chunk_budget, std::string_view tokenizer_id,
                    const std::filesystem::path& store_root) {
  require(chunk_budget >= kMinChunkBudget,
          fmt::format("chunk_budget must be >= {}, got {}", kMinChunkBudget, chunk_budget));
  require(!corpus_id.empty(), "corpus_id must not be empty");
  if (tokenizer_id != text::kTokenizerId) {
    fail(ErrorCode::kConfig, fmt::format("unknown tokenizer '{}' (supported: {})", tokenizer_id,
                                         text::kTokenizerId));
  }

  std::vector<const Document*> ordered;
  ordered.reserve(documents.size());
  std::set<std::string_view> seen;
  for (const auto& doc : documents) {
    if (!seen.insert(doc.doc_id).second) {
      fail(ErrorCode::kPrecondition, fmt::format("duplicate doc_id '{}'", doc.doc_id));
    }
    ordered.push_back(&doc);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const Document* a, const Document* b) { return a->doc_id < b->doc_id; });

  std::vector<std::vector<Passage>> per_document(ordered.size());
  parallel_for(ordered.size(), std::max(1u, std::thread::hardware_concurrency()),
               [&](std::size_t i) { per_document[i] = chunk_document(*ordered[i], chunk_budget); });

  IngestResult result;
  std::vector<Json> records;
  std::size_t doc_count = 0;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (per_document[i].empty()) {
      result.rejected.push_back({ordered[i]->doc_id, "document text is empty after normalization"});
      continue;
    }
    ++doc_count;
    for (const auto& passage : per_document[i]) records.push_back(to_json(passage));
  }

  const std::string body = to_jsonl(records);
  auto& manifest = result.manifest;
  manifest.corpus_id = std::string(corpus_id);
  manifest.chunk_budget = chunk_budget;
  manifest.tokenizer_id = std::string(tokenizer_id);
  manifest.passage_count = records.size();
  manifest.doc_count = doc_count;
  manifest.checksum = sha256_hex(body);

  const auto dir = corpus_dir(store_root, corpus_id);
  write_file(dir / "passages.jsonl", body);
  write_file(dir / "manifest.json", to_json(manifest).dump(2) + "\n");
  return result;
}

CorpusManifest load_manifest(const std::filesystem::path& store_root, std::string_view corpus_id) {
  const auto path = corpus_dir(store_root, corpus_id) / "manifest.json";
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::kNotFound, fmt::format("unknown corpus '{}'", corpus_id));
  }
  Json record;
  try {
    record = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::kCorruption, fmt::format("manifest for '{}' is not JSON: {}", corpus_id, e.what()));
  }
  return manifest_from_json(record);
}

std::vector<Passage> load_passages(const std::filesystem::path& store_root,
                                   std::string_view corpus_id) {
  const auto manifest = load_manifest(store_root, corpus_id);
  const auto path = corpus_dir(store_root, corpus_id) / "passages.jsonl";
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::kCorruption, fmt::format("passage store for '{}' is missing", corpus_id));
  }
  const std::string body = read_file(path);
  if (sha256_hex(body) != manifest.checksum) {
    fail(ErrorCode::kCorruption,
         fmt::format("passage store for '{}' does not match its manifest checksum", corpus_id));
  }
  std::vector<Passage> passages;
  for (const auto& record : read_jsonl(path)) passages.push_back(passage_from_json(record));
  if (passages.size() != manifest.passage_count) {
    fail(ErrorCode::kCorruption, fmt::format("manifest for '{}' lists {} passages, store has {}",
                                             corpus_id, manifest.passage_count, passages.size()));
  }
  std::sort(passages.begin(), passages.end(), [](const Passage& a, const Passage& b) {
    return std::tie(a.doc_id, a.seq) < std::tie(b.doc_id, b.seq);
  });
  return passages;
}

std::vector<Document> read_documents(const std::filesystem::path& source) {
  namespace fs = std::filesystem;
  if (!fs::exists(source)) {
    fail(ErrorCode::kNotFound, fmt::format("document source {} does not exist", source.string()));
  }
  std::vector<Document> documents;
  if (fs::is_directory(source)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(source)) {
      if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      const auto stem = file.stem().string();
      documents.push_back({stem, stem, read_file(file), file.string()});
    }
    return documents;
  }
  for (const auto& record : read_jsonl(source)) {
    try {
      Document doc;
      doc.doc_id = record.at("doc_id").get<std::string>();
      doc.title = record.value("title", doc.doc_id);
      doc.text = record.at("text").get<std::string>();
      doc.source_uri = record.value("source_uri", source.string());
      documents.push_back(std::move(doc));
    } catch (const Json::exception& e) {
      fail(ErrorCode::kConfig, fmt::format("malformed document record in {}: {}", source.string(),
                                           e.what()));
    }
  }
  return documents;
}

}  // namespace rageval::corpus
