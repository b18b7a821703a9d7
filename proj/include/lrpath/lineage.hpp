#pragma once

// Checkpoint lineage and data-segment bookkeeping.
//
// On disk an experiment directory holds
//   manifest.json     canonical JSON (sorted keys, UTF-8)
//   ckpt/<id>.bin     "LRPC" | u32 version | u64 param_count | u64 seed | u64 step | f64 params...
// with every integer and float little-endian.

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "lrpath/error.hpp"
#include "lrpath/eval_report.hpp"
#include "lrpath/paradigm.hpp"
#include "lrpath/rng.hpp"
#include "lrpath/serialize.hpp"

namespace lrpath {

inline constexpr int kManifestFormatVersion = 1;
inline constexpr std::uint32_t kPayloadFormatVersion = 1;

struct DataSegment {
  std::string segment_id;
  int increment_index = 1;
  std::int64_t start_offset = 0;  // tokens from the start of the training region
  std::int64_t length = 0;        // tokens
  std::uint64_t sampling_seed = 0;

  friend bool operator==(const DataSegment&, const DataSegment&) = default;
};

struct CheckpointRecord {
  std::string ckpt_id;
  std::string phase_id;
  int version = 1;
  PathKind path = PathKind::Scratch;
  std::optional<std::string> parent;  // empty: fresh initialization
  std::int64_t global_step = 0;
  std::optional<EvalReport> metrics;
  std::string payload_file;

  friend bool operator==(const CheckpointRecord&, const CheckpointRecord&) = default;
};

struct Manifest {
  int format_version = kManifestFormatVersion;
  UpdateSpec spec;
  std::vector<CheckpointRecord> records;
  std::vector<DataSegment> segments;

  const CheckpointRecord* find(std::string_view ckpt_id) const {
    for (const auto& r : records)
      if (r.ckpt_id == ckpt_id) return &r;
    return nullptr;
  }
  const CheckpointRecord* find_by_phase(std::string_view phase_id) const {
    for (const auto& r : records)
      if (r.phase_id == phase_id) return &r;
    return nullptr;
  }

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

inline std::string checkpoint_id(std::string_view phase_id) { return "ckpt-" + std::string(phase_id); }

// ---------------------------------------------------------------------------
// Segments

/// Lays the increments of `plan` out over a training region of
/// `corpus_size` tokens without replacement. Increment blocks are placed in
/// a seed-dependent order; each block is cut at every boundary a phase of the
/// plan reads from, so a path-switching increment becomes a main-path prefix
/// and a fast-decay remainder. All pieces of one increment share its sampling
/// seed, which fixes the order its windows are visited in (see PhaseData).
inline std::vector<DataSegment> allocate_segments(const TrainingPlan& plan, std::int64_t corpus_size,
                                                  std::int64_t tokens_per_step) {
  const auto& spec = plan.spec;
  spec.validate();
  if (tokens_per_step < 1) fail(ErrorKind::InvalidArgument, "tokens_per_step must be positive");
  const std::int64_t demand = spec.total_steps() * tokens_per_step;
  if (demand > corpus_size)
    fail(ErrorKind::CorpusExhausted, "plan needs " + std::to_string(demand) + " tokens, corpus holds " +
                                         std::to_string(corpus_size));

  std::map<int, std::set<Step>> cuts;
  for (int v = 1; v <= spec.num_versions; ++v) cuts[v] = {0, spec.increment(v)};
  for (const auto& phase : plan.phases)
    for (const auto& ref : phase.data) {
      cuts[ref.increment].insert(ref.offset);
      cuts[ref.increment].insert(ref.offset + ref.length);
    }

  std::vector<int> order(static_cast<std::size_t>(spec.num_versions));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i) + 1;
  Rng rng(derive_seed(spec.seed, 0xb10c));
  rng.shuffle(order);

  std::map<int, std::int64_t> block_start;
  std::int64_t cursor = 0;
  for (int inc : order) {
    block_start[inc] = cursor;
    cursor += spec.increment(inc) * tokens_per_step;
  }

  std::vector<DataSegment> out;
  for (int v = 1; v <= spec.num_versions; ++v) {
    const auto& c = cuts[v];
    for (auto it = c.begin(); std::next(it) != c.end(); ++it) {
      const Step from = *it, to = *std::next(it);
      DataSegment seg;
      seg.segment_id = "inc" + std::to_string(v) + ":" + std::to_string(from) + "-" + std::to_string(to);
      seg.increment_index = v;
      seg.start_offset = block_start[v] + from * tokens_per_step;
      seg.length = (to - from) * tokens_per_step;
      seg.sampling_seed = derive_seed(spec.seed, static_cast<std::uint64_t>(v));
      out.push_back(std::move(seg));
    }
  }
  return out;
}

/// Segments that together make up `ref`, in order.
inline std::vector<const DataSegment*> segments_for(const SegmentRef& ref, const std::vector<DataSegment>& segments,
                                                    std::int64_t tokens_per_step) {
  std::vector<const DataSegment*> picked;
  std::int64_t base = -1;
  for (const auto& s : segments)
    if (s.increment_index == ref.increment && (base < 0 || s.start_offset < base)) base = s.start_offset;
  if (base < 0) fail(ErrorKind::DataExhausted, "no segments for increment " + std::to_string(ref.increment));
  const std::int64_t from = base + ref.offset * tokens_per_step;
  const std::int64_t to = from + ref.length * tokens_per_step;
  for (const auto& s : segments)
    if (s.increment_index == ref.increment && s.start_offset >= from && s.start_offset + s.length <= to)
      picked.push_back(&s);
  std::sort(picked.begin(), picked.end(),
            [](const DataSegment* a, const DataSegment* b) { return a->start_offset < b->start_offset; });
  std::int64_t covered = 0;
  for (const auto* s : picked) covered += s->length;
  if (covered != to - from)
    fail(ErrorKind::DataExhausted, "segments do not tile increment " + std::to_string(ref.increment) + " at offset " +
                                       std::to_string(ref.offset));
  return picked;
}

// ---------------------------------------------------------------------------
// Manifest mutation

inline Manifest record_checkpoint(Manifest m, CheckpointRecord rec) {
  if (rec.ckpt_id.empty()) fail(ErrorKind::InvalidArgument, "checkpoint id must not be empty");
  if (m.find(rec.ckpt_id)) fail(ErrorKind::DuplicateId, "checkpoint " + rec.ckpt_id + " already recorded");
  if (m.find_by_phase(rec.phase_id))
    fail(ErrorKind::DuplicateId, "phase " + rec.phase_id + " already has a final checkpoint");
  if (rec.parent && !m.find(*rec.parent))
    fail(ErrorKind::DanglingReference, "checkpoint " + rec.ckpt_id + " names unknown parent " + *rec.parent);
  m.records.push_back(std::move(rec));
  return m;
}

using ResolvedInit = std::variant<FreshInit, CheckpointRecord>;

/// The record a phase starts from, or its fresh initialization.
inline ResolvedInit resolve_init(const Manifest& m, const Phase& phase) {
  if (const auto* fresh = std::get_if<FreshInit>(&phase.init_from)) return *fresh;
  const auto& parent = std::get<FromPhase>(phase.init_from).phase_id;
  const auto* rec = m.find_by_phase(parent);
  if (!rec) fail(ErrorKind::MissingCheckpoint, "phase " + phase.phase_id + " needs " + parent + " which has not run");
  return *rec;
}

// ---------------------------------------------------------------------------
// JSON

using SortedJson = nlohmann::json;

inline SortedJson to_sorted_json(const EvalReport& r) {
  return SortedJson{{"ppl", r.ppl}, {"nll", r.nll}, {"tokens_evaluated", r.tokens_evaluated}};
}

inline SortedJson to_sorted_json(const Manifest& m) {
  SortedJson j;
  j["format_version"] = m.format_version;
  j["spec"] = SortedJson::parse(to_json(m.spec).dump());
  SortedJson records = SortedJson::array();
  for (const auto& r : m.records) {
    SortedJson jr;
    jr["ckpt_id"] = r.ckpt_id;
    jr["phase_id"] = r.phase_id;
    jr["version"] = r.version;
    jr["path"] = std::string(to_string(r.path));
    jr["parent"] = r.parent ? SortedJson(*r.parent) : SortedJson(nullptr);
    jr["global_step"] = r.global_step;
    jr["metrics"] = r.metrics ? to_sorted_json(*r.metrics) : SortedJson(nullptr);
    jr["payload_file"] = r.payload_file;
    records.push_back(std::move(jr));
  }
  j["records"] = std::move(records);
  SortedJson segments = SortedJson::array();
  for (const auto& s : m.segments)
    segments.push_back({{"segment_id", s.segment_id},
                        {"increment_index", s.increment_index},
                        {"start_offset", s.start_offset},
                        {"length", s.length},
                        {"sampling_seed", s.sampling_seed}});
  j["segments"] = std::move(segments);
  return j;
}

inline std::string manifest_to_string(const Manifest& m) { return to_sorted_json(m).dump(2) + "\n"; }

inline Manifest manifest_from_string(std::string_view text) {
  SortedJson j;
  try {
    j = SortedJson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaMismatch, std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || !j.contains("format_version")) fail(ErrorKind::SchemaMismatch, "manifest lacks format_version");
    const int version = j.at("format_version").get<int>();
    if (version != kManifestFormatVersion)
      fail(ErrorKind::SchemaMismatch, "manifest format_version " + std::to_string(version) + ", expected " +
                                          std::to_string(kManifestFormatVersion));
    Manifest m;
    m.format_version = version;
    m.spec = spec_from_json(Json::parse(j.at("spec").dump()));
    for (const auto& s : j.at("segments")) {
      DataSegment seg;
      seg.segment_id = s.at("segment_id").get<std::string>();
      seg.increment_index = s.at("increment_index").get<int>();
      seg.start_offset = s.at("start_offset").get<std::int64_t>();
      seg.length = s.at("length").get<std::int64_t>();
      seg.sampling_seed = s.at("sampling_seed").get<std::uint64_t>();
      m.segments.push_back(std::move(seg));
    }
    for (const auto& r : j.at("records")) {
      CheckpointRecord rec;
      rec.ckpt_id = r.at("ckpt_id").get<std::string>();
      rec.phase_id = r.at("phase_id").get<std::string>();
      rec.version = r.at("version").get<int>();
      const auto path = r.at("path").get<std::string>();
      rec.path = path == "main" ? PathKind::Main : path == "branch" ? PathKind::Branch : PathKind::Scratch;
      if (path != "main" && path != "branch" && path != "scratch") fail(ErrorKind::SchemaMismatch, "bad path " + path);
      if (!r.at("parent").is_null()) rec.parent = r.at("parent").get<std::string>();
      rec.global_step = r.at("global_step").get<std::int64_t>();
      if (const auto& mj = r.at("metrics"); !mj.is_null())
        rec.metrics = EvalReport{mj.at("ppl").get<double>(), mj.at("nll").get<double>(),
                                 mj.at("tokens_evaluated").get<std::int64_t>()};
      rec.payload_file = r.at("payload_file").get<std::string>();
      m = record_checkpoint(std::move(m), std::move(rec));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaMismatch, std::string("manifest: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::SchemaMismatch) throw;
    fail(ErrorKind::SchemaMismatch, std::string("manifest: ") + e.what());
  }
}

namespace detail {

inline void write_file_atomically(const std::filesystem::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::IoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::IoError, "cannot move " + tmp.string() + " into place: " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace detail

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  detail::write_file_atomically(path, manifest_to_string(m));
}

inline Manifest load_manifest(const std::filesystem::path& path) { return manifest_from_string(detail::read_file(path)); }

// ---------------------------------------------------------------------------
// Checkpoint payloads

struct Payload {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::vector<double> values;

  friend bool operator==(const Payload&, const Payload&) = default;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::string_view in, std::size_t& pos) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if (pos + sizeof(U) > in.size()) fail(ErrorKind::SchemaMismatch, "checkpoint payload truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bits |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(U);
  return std::bit_cast<T>(bits);
}

}  // namespace detail

inline std::string encode_payload(const Payload& p) {
  std::string out = "LRPC";
  out.reserve(4 + 4 + 24 + 8 * p.values.size());
  detail::put_le(out, kPayloadFormatVersion);
  detail::put_le(out, static_cast<std::uint64_t>(p.values.size()));
  detail::put_le(out, p.seed);
  detail::put_le(out, p.step);
  for (double v : p.values) detail::put_le(out, v);
  return out;
}

inline Payload decode_payload(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "LRPC") fail(ErrorKind::SchemaMismatch, "bad checkpoint magic");
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  if (version != kPayloadFormatVersion)
    fail(ErrorKind::SchemaMismatch, "checkpoint payload version " + std::to_string(version));
  const auto count = detail::get_le<std::uint64_t>(bytes, pos);
  Payload p;
  p.seed = detail::get_le<std::uint64_t>(bytes, pos);
  p.step = detail::get_le<std::uint64_t>(bytes, pos);
  if ((bytes.size() - pos) / 8 != count || (bytes.size() - pos) % 8 != 0)
    fail(ErrorKind::SchemaMismatch, "checkpoint payload length does not match its parameter count");
  p.values.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) p.values.push_back(detail::get_le<double>(bytes, pos));
  return p;
}

inline void write_payload(const std::filesystem::path& path, const Payload& p) {
  detail::write_file_atomically(path, encode_payload(p));
}

inline Payload read_payload(const std::filesystem::path& path) { return decode_payload(detail::read_file(path)); }

}  // namespace lrpath
