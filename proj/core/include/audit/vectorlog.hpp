#pragma once

#include <array>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "audit/providers.hpp"

namespace audit::vectorlog {

inline constexpr std::array<const char*, 4> kRequiredMetadataKeys = {
    "owner", "timestamp", "content_type", "verdict_summary"};

struct VectorRecord {
  std::string id;
  std::vector<float> vector;  // kEmbeddingDim, unit L2 norm
  std::map<std::string, std::string> metadata;
};

struct StoreConfig {
  double dedup_threshold = 0.95;  // inclusive
  std::string snapshot_path;

  void validate() const;
};

struct QueryMatch {
  std::string id;
  double similarity = 0.0;
  std::map<std::string, std::string> metadata;
};

/// Embedded exact-scan vector store. Many concurrent readers; writes are
/// exclusive at store granularity.
class VectorStore {
 public:
  explicit VectorStore(int dimension = providers::kEmbeddingDim);

  VectorStore(VectorStore&& other) noexcept;
  VectorStore& operator=(VectorStore&& other) noexcept;

  /// Stores or replaces the record under its id. Throws bad_dimension /
  /// missing_metadata.
  std::string upsert(VectorRecord record);

  std::optional<VectorRecord> get(const std::string& id) const;

  /// Exact top-k by cosine descending, ties by id ascending; fewer than k
  /// when the store is smaller. Throws bad_dimension.
  std::vector<QueryMatch> query(std::span<const float> vector, int k) const;

  /// Top match iff its similarity >= cfg.dedup_threshold.
  std::optional<QueryMatch> dedup_check(std::span<const float> vector,
                                        const StoreConfig& cfg) const;

  std::size_t size() const;
  int dimension() const { return dimension_; }

  /// Line-delimited JSON records {id, vector: [..], metadata: {..}}, one
  /// per line, UTF-8, ordered by id. load(save(s)) == s bit-exactly.
  void snapshot_save(const std::string& path) const;

  /// Throws corrupt_snapshot with the offending 1-based line number.
  static VectorStore snapshot_load(const std::string& path,
                                   int dimension = providers::kEmbeddingDim);

 private:
  void check_dimension(std::size_t got) const;

  mutable std::shared_mutex mutex_;
  int dimension_;
  std::map<std::string, VectorRecord> records_;
};

}  // namespace audit::vectorlog
