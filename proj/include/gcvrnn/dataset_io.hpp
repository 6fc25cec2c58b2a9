#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gcvrnn/binary_io.hpp"
#include "gcvrnn/data.hpp"
#include "gcvrnn/model_config.hpp"

namespace gcvrnn {

// Dataset file layout
//
//   GCVRNN-DATASET 1\n
//   key=value header lines: mode, parameter, camera_x, camera_y, units, seed,
//                           agents, t_past, t_future, records, has_results
//   end_header\n
//   payload, per record (all little-endian):
//     u32  record byte length (everything after this field)
//     u32  id length, id bytes
//     u8   split (0 = train, 1 = test)
//     f64  coords      T x N x 2
//     f64  reference   T x 2
//     u8   mask        t_past x N, values 0/1
//     if has_results:
//       f64 imputed    t_past x N x 2
//       f64 predicted  t_future x N x 2

inline constexpr const char* kDatasetMagicPrefix = "GCVRNN-DATASET ";
inline constexpr int kDatasetVersion = 1;

enum class Split : std::uint8_t { train = 0, test = 1 };

struct DatasetHeader {
  int version = kDatasetVersion;
  MaskingSpec masking;
  std::string units = "ft";
  std::uint64_t seed = 0;
  std::size_t agents = 0;
  std::size_t t_past = 0;
  std::size_t t_future = 0;

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

struct ResultSection {
  std::vector<double> imputed;    // t_past x N x 2
  std::vector<double> predicted;  // t_future x N x 2
  friend bool operator==(const ResultSection&, const ResultSection&) = default;
};

struct DatasetRecord {
  TrajectorySequence sequence;
  MaskMatrix mask;
  Split split = Split::train;
  std::optional<ResultSection> result;
  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct DatasetFile {
  DatasetHeader header;
  std::vector<DatasetRecord> records;

  bool has_results() const {
    return !records.empty() && std::all_of(records.begin(), records.end(), [](const auto& r) { return r.result.has_value(); });
  }

  std::vector<const DatasetRecord*> split(Split s) const {
    std::vector<const DatasetRecord*> out;
    for (const auto& r : records)
      if (r.split == s) out.push_back(&r);
    return out;
  }

  friend bool operator==(const DatasetFile&, const DatasetFile&) = default;
};

inline std::string encode_dataset(const DatasetFile& f) {
  const auto& h = f.header;
  const bool results = f.has_results();
  if (!results && std::any_of(f.records.begin(), f.records.end(), [](const auto& r) { return r.result.has_value(); })) {
    throw ContractError("either every record carries results or none does");
  }
  std::ostringstream head;
  head << kDatasetMagicPrefix << h.version << '\n';
  head << "mode=" << to_string(h.masking.mode) << '\n';
  head << "parameter=" << detail::format_double(h.masking.parameter) << '\n';
  head << "camera_x=" << detail::format_double(h.masking.camera.x) << '\n';
  head << "camera_y=" << detail::format_double(h.masking.camera.y) << '\n';
  head << "units=" << h.units << '\n';
  head << "seed=" << h.seed << '\n';
  head << "agents=" << h.agents << '\n';
  head << "t_past=" << h.t_past << '\n';
  head << "t_future=" << h.t_future << '\n';
  head << "records=" << f.records.size() << '\n';
  head << "has_results=" << (results ? 1 : 0) << '\n';
  head << "end_header\n";
  io::Writer w;
  for (const auto& r : f.records) {
    const auto& s = r.sequence;
    if (s.agents != h.agents || s.t_past != h.t_past || s.t_future != h.t_future) {
      throw DimensionError("record " + s.id + " disagrees with dataset header dimensions");
    }
    if (r.mask.t_past != h.t_past || r.mask.agents != h.agents) throw DimensionError("mask of record " + s.id + " disagrees with header");
    io::Writer rec;
    rec.str(s.id);
    rec.u8(static_cast<std::uint8_t>(r.split));
    rec.f64s(s.coords);
    rec.f64s(s.reference);
    for (auto b : r.mask.bits) rec.u8(b);
    if (results) {
      if (r.result->imputed.size() != h.t_past * h.agents * 2 || r.result->predicted.size() != h.t_future * h.agents * 2) {
        throw DimensionError("result section of record " + s.id + " has wrong size");
      }
      rec.f64s(r.result->imputed);
      rec.f64s(r.result->predicted);
    }
    w.u32(static_cast<std::uint32_t>(rec.buffer().size()));
    w.bytes(rec.buffer());
  }
  return head.str() + w.buffer();
}

inline DatasetFile decode_dataset(const std::string& bytes, const std::string& what = "dataset") {
  const std::string prefix = kDatasetMagicPrefix;
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos || bytes.compare(0, prefix.size(), prefix) != 0) {
    throw ParseError(what + ": not a dataset file (bad magic at line 1)");
  }
  const std::string ver = bytes.substr(prefix.size(), nl - prefix.size());
  if (ver != std::to_string(kDatasetVersion)) {
    throw ParseError(what + ": unsupported dataset version '" + ver + "' at line 1 (expected " + std::to_string(kDatasetVersion) + ")");
  }
  std::vector<std::pair<std::string, std::string>> lines;
  const std::size_t payload = io::read_header_lines(bytes, "end_header", lines, what, nl + 1);
  DatasetFile f;
  auto& h = f.header;
  std::size_t count = 0;
  bool results = false;
  std::size_t line_no = 1;
  for (const auto& [k, v] : lines) {
    ++line_no;
    try {
      if (k == "mode") h.masking.mode = parse_mask_mode(v);
      else if (k == "parameter") h.masking.parameter = detail::parse_double(k, v);
      else if (k == "camera_x") h.masking.camera.x = detail::parse_double(k, v);
      else if (k == "camera_y") h.masking.camera.y = detail::parse_double(k, v);
      else if (k == "units") h.units = v;
      else if (k == "seed") h.seed = detail::parse_uint(k, v);
      else if (k == "agents") h.agents = detail::parse_uint(k, v);
      else if (k == "t_past") h.t_past = detail::parse_uint(k, v);
      else if (k == "t_future") h.t_future = detail::parse_uint(k, v);
      else if (k == "records") count = detail::parse_uint(k, v);
      else if (k == "has_results") results = detail::parse_bool(k, v);
      else throw ParseError("unknown header key '" + k + "'");
    } catch (const Error& e) {
      throw ParseError(what + ": " + e.what() + " at line " + std::to_string(line_no));
    }
  }
  const std::size_t T = h.t_past + h.t_future;
  const std::size_t N = h.agents;
  io::Reader r(bytes, payload, what);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t len = r.u32();
    const std::size_t start = r.position();
    if (bytes.size() - start < len) r.fail("record " + std::to_string(k) + " length " + std::to_string(len) + " exceeds file");
    DatasetRecord rec;
    auto& s = rec.sequence;
    s.id = r.str(len);
    const auto split = r.u8();
    if (split > 1) r.fail("invalid split tag " + std::to_string(split));
    rec.split = static_cast<Split>(split);
    s.agents = N;
    s.t_past = h.t_past;
    s.t_future = h.t_future;
    const std::size_t expected = 4 + s.id.size() + 1 + (T * N * 2 + T * 2) * 8 + h.t_past * N +
                                 (results ? (h.t_past + h.t_future) * N * 2 * 8 : 0);
    if (len != expected) {
      r.fail("record " + std::to_string(k) + " has " + std::to_string(len) + " bytes but header shape (T=" +
             std::to_string(T) + ", N=" + std::to_string(N) + ") requires " + std::to_string(expected));
    }
    s.coords = r.f64s(T * N * 2);
    s.reference = r.f64s(T * 2);
    rec.mask = MaskMatrix(h.t_past, N, 0);
    for (auto& b : rec.mask.bits) {
      b = r.u8();
      if (b > 1) r.fail("mask value " + std::to_string(b) + " is not binary");
    }
    if (results) {
      ResultSection res;
      res.imputed = r.f64s(h.t_past * N * 2);
      res.predicted = r.f64s(h.t_future * N * 2);
      rec.result = std::move(res);
    }
    f.records.push_back(std::move(rec));
  }
  if (!r.at_end()) r.fail("trailing bytes after " + std::to_string(count) + " records");
  return f;
}

inline void write_dataset(const std::string& path, const DatasetFile& f) { io::write_file(path, encode_dataset(f)); }
inline DatasetFile read_dataset(const std::string& path) { return decode_dataset(io::read_file(path), path); }

/// Number of records whose stored mask differs from the mask regenerated
/// from the header scenario.
inline std::size_t count_mask_mismatches(const DatasetFile& f) {
  std::size_t bad = 0;
  for (const auto& r : f.records)
    if (!(apply_mask(r.sequence, f.header.masking) == r.mask)) ++bad;
  return bad;
}

}  // namespace gcvrnn
