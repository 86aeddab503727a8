#include "audit/vectorlog.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "audit/error.hpp"

namespace audit::vectorlog {

void StoreConfig::validate() const {
  if (!(dedup_threshold > 0.0 && dedup_threshold <= 1.0))
    throw Error(Errc::config_error, "store.dedup_threshold must be in (0, 1]");
}

VectorStore::VectorStore(int dimension) : dimension_(dimension) {
  if (dimension < 1) throw Error(Errc::bad_dimension, "dimension must be >= 1");
}

VectorStore::VectorStore(VectorStore&& other) noexcept {
  std::unique_lock lock(other.mutex_);
  dimension_ = other.dimension_;
  records_ = std::move(other.records_);
}

VectorStore& VectorStore::operator=(VectorStore&& other) noexcept {
  if (this != &other) {
    std::unique_lock self_lock(mutex_, std::defer_lock);
    std::unique_lock other_lock(other.mutex_, std::defer_lock);
    std::lock(self_lock, other_lock);
    dimension_ = other.dimension_;
    records_ = std::move(other.records_);
  }
  return *this;
}

void VectorStore::check_dimension(std::size_t got) const {
  if (got != static_cast<std::size_t>(dimension_))
    throw Error(Errc::bad_dimension,
                "expected dimension " + std::to_string(dimension_) + ", got " +
                    std::to_string(got));
}

std::string VectorStore::upsert(VectorRecord record) {
  check_dimension(record.vector.size());
  if (record.id.empty()) throw Error(Errc::bad_args, "record id must be non-empty");
  for (const char* key : kRequiredMetadataKeys) {
    if (!record.metadata.count(key))
      throw Error(Errc::missing_metadata, std::string("metadata lacks required key ") + key);
  }
  std::unique_lock lock(mutex_);
  std::string id = record.id;
  records_[id] = std::move(record);
  return id;
}

std::optional<VectorRecord> VectorStore::get(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = records_.find(id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::vector<QueryMatch> VectorStore::query(std::span<const float> vector, int k) const {
  check_dimension(vector.size());
  if (k < 1) return {};
  std::shared_lock lock(mutex_);
  std::vector<QueryMatch> matches;
  matches.reserve(records_.size());
  for (const auto& [id, record] : records_) {
    matches.push_back({id, providers::cosine(vector, record.vector), record.metadata});
  }
  const auto better = [](const QueryMatch& a, const QueryMatch& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
  };
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k),
                                                 matches.size());
  std::partial_sort(matches.begin(), matches.begin() + static_cast<std::ptrdiff_t>(keep),
                    matches.end(), better);
  matches.resize(keep);
  return matches;
}

std::optional<QueryMatch> VectorStore::dedup_check(std::span<const float> vector,
                                                   const StoreConfig& cfg) const {
  cfg.validate();
  auto top = query(vector, 1);
  if (top.empty() || top.front().similarity < cfg.dedup_threshold) return std::nullopt;
  return top.front();
}

std::size_t VectorStore::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

void VectorStore::snapshot_save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error(Errc::corrupt_snapshot, "cannot open for writing: " + path);
  std::shared_lock lock(mutex_);
  for (const auto& [id, record] : records_) {
    nlohmann::json j;
    j["id"] = id;
    auto& vec = j["vector"] = nlohmann::json::array();
    for (float f : record.vector) vec.push_back(static_cast<double>(f));
    j["metadata"] = record.metadata;
    out << j.dump() << '\n';
  }
  out.flush();
  if (!out) throw Error(Errc::corrupt_snapshot, "failed writing snapshot: " + path);
}

VectorStore VectorStore::snapshot_load(const std::string& path, int dimension) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::corrupt_snapshot, "cannot open for reading: " + path);
  VectorStore store(dimension);
  std::string line;
  long line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw Error(Errc::corrupt_snapshot, "record is not a JSON object", line_number);
    VectorRecord record;
    try {
      record.id = j.at("id").get<std::string>();
      const auto& vec = j.at("vector");
      if (!vec.is_array() || vec.size() != static_cast<std::size_t>(dimension))
        throw Error(Errc::corrupt_snapshot, "vector has wrong dimension", line_number);
      record.vector.reserve(vec.size());
      for (const auto& v : vec)
        record.vector.push_back(static_cast<float>(v.get<double>()));
      record.metadata =
          j.at("metadata").get<std::map<std::string, std::string>>();
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(Errc::corrupt_snapshot, e.what(), line_number);
    }
    if (record.id.empty())
      throw Error(Errc::corrupt_snapshot, "record id is empty", line_number);
    for (const char* key : kRequiredMetadataKeys) {
      if (!record.metadata.count(key))
        throw Error(Errc::corrupt_snapshot,
                    std::string("metadata lacks required key ") + key, line_number);
    }
    store.records_[record.id] = std::move(record);
  }
  return store;
}

}  // namespace audit::vectorlog
