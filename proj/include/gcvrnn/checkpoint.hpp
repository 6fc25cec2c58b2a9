#pragma once

#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "gcvrnn/binary_io.hpp"
#include "gcvrnn/model.hpp"
#include "gcvrnn/optim.hpp"

namespace gcvrnn {

// Checkpoint layout
//
//   GCVRNN-CHECKPOINT 1\n
//   key=value lines:
//     config.<field>=...            every ModelConfig field
//     meta.<key>=...                free-form run metadata (epoch, flags, ...)
//     optimizer.step / optimizer.learning_rate / optimizer.present
//     tensor=<name>;shape=<a>x<b>;dtype=f64le;offset=<byte>;count=<n>
//   end_manifest\n
//   payload: little-endian float64 values of each tensor in manifest order;
//            offsets are relative to the start of the payload.
//
// Optimizer moments are stored as tensors named "adam.m/<param>" and
// "adam.v/<param>".

inline constexpr const char* kCheckpointMagic = "GCVRNN-CHECKPOINT 1";

struct CheckpointData {
  ModelConfig config;
  std::map<std::string, std::string> meta;
  bool has_optimizer = false;
  std::uint64_t optimizer_step = 0;
  double learning_rate = 0.0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

inline std::string encode_checkpoint(const CheckpointData& ck) {
  std::ostringstream head;
  head << kCheckpointMagic << '\n';
  for (const auto& [k, v] : to_key_values(ck.config)) head << "config." << k << '=' << v << '\n';
  for (const auto& [k, v] : ck.meta) head << "meta." << k << '=' << v << '\n';
  head << "optimizer.present=" << (ck.has_optimizer ? "true" : "false") << '\n';
  head << "optimizer.step=" << ck.optimizer_step << '\n';
  head << "optimizer.learning_rate=" << detail::format_double(ck.learning_rate) << '\n';
  std::size_t offset = 0;
  io::Writer payload;
  for (const auto& [name, t] : ck.tensors) {
    if (name.find_first_of(";=\n") != std::string::npos) throw ContractError("invalid tensor name " + name);
    head << "tensor=" << name << ";shape=";
    for (std::size_t i = 0; i < t.shape().size(); ++i) head << (i ? "x" : "") << t.shape()[i];
    head << ";dtype=f64le;offset=" << offset << ";count=" << t.size() << '\n';
    payload.f64s(t.storage());
    offset += t.size() * 8;
  }
  head << "end_manifest\n";
  return head.str() + payload.buffer();
}

inline CheckpointData decode_checkpoint(const std::string& bytes, const std::string& what = "checkpoint") {
  const std::string magic = std::string(kCheckpointMagic) + "\n";
  if (bytes.compare(0, magic.size(), magic) != 0) throw ParseError(what + ": bad magic or unsupported version at line 1");
  std::vector<std::pair<std::string, std::string>> lines;
  const std::size_t payload_start = io::read_header_lines(bytes, "end_manifest", lines, what, magic.size());
  CheckpointData ck;
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset = 0, count = 0;
  };
  std::vector<Entry> entries;
  for (const auto& [k, v] : lines) {
    if (k.rfind("config.", 0) == 0) {
      if (!set_model_field(ck.config, k.substr(7), v)) throw ParseError(what + ": unknown config key " + k);
    } else if (k.rfind("meta.", 0) == 0) {
      ck.meta[k.substr(5)] = v;
    } else if (k == "optimizer.present") {
      ck.has_optimizer = detail::parse_bool(k, v);
    } else if (k == "optimizer.step") {
      ck.optimizer_step = detail::parse_uint(k, v);
    } else if (k == "optimizer.learning_rate") {
      ck.learning_rate = detail::parse_double(k, v);
    } else if (k == "tensor") {
      Entry e;
      std::stringstream ss(v);
      std::string field;
      std::getline(ss, e.name, ';');
      while (std::getline(ss, field, ';')) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw ParseError(what + ": malformed tensor entry '" + v + "'");
        const std::string fk = field.substr(0, eq), fv = field.substr(eq + 1);
        if (fk == "shape") {
          std::stringstream dims(fv);
          std::string d;
          while (std::getline(dims, d, 'x')) e.shape.push_back(detail::parse_uint("shape", d));
        } else if (fk == "dtype") {
          if (fv != "f64le") throw ParseError(what + ": unsupported dtype " + fv);
        } else if (fk == "offset") {
          e.offset = detail::parse_uint("offset", fv);
        } else if (fk == "count") {
          e.count = detail::parse_uint("count", fv);
        }
      }
      if (e.shape.empty() || shape_count(e.shape) != e.count) throw ParseError(what + ": tensor " + e.name + " shape/count disagree");
      entries.push_back(std::move(e));
    } else {
      throw ParseError(what + ": unknown manifest key " + k);
    }
  }
  std::size_t expected = 0;
  for (const auto& e : entries) {
    if (e.offset != expected) throw ParseError(what + ": tensor " + e.name + " has offset " + std::to_string(e.offset) + ", expected " + std::to_string(expected));
    expected += e.count * 8;
  }
  if (bytes.size() - payload_start != expected) {
    throw ParseError(what + ": payload is " + std::to_string(bytes.size() - payload_start) + " bytes, manifest declares " +
                     std::to_string(expected) + " at byte " + std::to_string(payload_start));
  }
  io::Reader r(bytes, payload_start, what);
  for (const auto& e : entries) ck.tensors.emplace_back(e.name, Tensor(e.shape, r.f64s(e.count)));
  return ck;
}

/// Snapshot of a model (and optionally its optimizer) for persistence.
inline CheckpointData make_checkpoint(const GcVrnn& model, const Adam* opt, std::map<std::string, std::string> meta = {}) {
  CheckpointData ck;
  ck.config = model.config();
  ck.meta = std::move(meta);
  const auto& ps = model.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) ck.tensors.emplace_back(ps[i].name, ps[i].value);
  if (opt) {
    ck.has_optimizer = true;
    ck.optimizer_step = opt->step_count();
    ck.learning_rate = opt->learning_rate();
    for (std::size_t i = 0; i < ps.size(); ++i) ck.tensors.emplace_back("adam.m/" + ps[i].name, opt->first_moments()[i]);
    for (std::size_t i = 0; i < ps.size(); ++i) ck.tensors.emplace_back("adam.v/" + ps[i].name, opt->second_moments()[i]);
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const GcVrnn& model, const Adam* opt,
                            std::map<std::string, std::string> meta = {}) {
  io::write_file(path, encode_checkpoint(make_checkpoint(model, opt, std::move(meta))));
}

/// Copies stored weights into `model`; every model parameter must be present
/// with a matching shape.
inline void restore_parameters(const CheckpointData& ck, GcVrnn& model) {
  auto& ps = model.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Tensor* t = ck.find(ps[i].name);
    if (!t) throw DataError("checkpoint lacks parameter " + ps[i].name);
    if (t->shape() != ps[i].value.shape()) {
      throw DimensionError("checkpoint parameter " + ps[i].name + " has shape " + shape_string(t->shape()) +
                           ", model expects " + shape_string(ps[i].value.shape()));
    }
    ps[i].value = *t;
  }
}

inline void restore_optimizer(const CheckpointData& ck, const GcVrnn& model, Adam& opt) {
  if (!ck.has_optimizer) throw DataError("checkpoint has no optimizer state");
  const auto& ps = model.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Tensor* m = ck.find("adam.m/" + ps[i].name);
    const Tensor* v = ck.find("adam.v/" + ps[i].name);
    if (!m || !v) throw DataError("checkpoint lacks optimizer moments for " + ps[i].name);
    opt.first_moments()[i] = *m;
    opt.second_moments()[i] = *v;
  }
  opt.set_step_count(ck.optimizer_step);
  opt.set_learning_rate(ck.learning_rate);
}

inline std::unique_ptr<GcVrnn> model_from_checkpoint(const CheckpointData& ck) {
  auto model = std::make_unique<GcVrnn>(ck.config);
  restore_parameters(ck, *model);
  return model;
}

inline CheckpointData load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path), path); }

}  // namespace gcvrnn
