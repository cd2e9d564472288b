#include "sdefim/checkpoint.hpp"

#include "sdefim/binary_io.hpp"
#include "sdefim/error.hpp"

namespace sdefim {

namespace {

constexpr std::string_view kMagic = "SDEFIMCK";

void write_vector(BinaryWriter& w, const Eigen::VectorXd& v) {
  w.u64(static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}

Eigen::VectorXd read_vector(BinaryReader& r, Eigen::Index expected) {
  const auto n = static_cast<Eigen::Index>(r.u64());
  if (n != expected) throw FormatError("checkpoint vector has unexpected length");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = r.f64();
  return v;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  BinaryWriter w;
  w.raw(kMagic);
  w.u32(kCheckpointFormatVersion);
  const nlohmann::json header = {{"format_version", kCheckpointFormatVersion},
                                 {"model", to_json(ckpt.model)},
                                 {"train", ckpt.train},
                                 {"step", ckpt.step},
                                 {"seed", ckpt.seed},
                                 {"parameter_count", ckpt.params.count()},
                                 {"extra", ckpt.extra}};
  w.string(header.dump());
  const auto& blocks = ckpt.params.blocks();
  w.u64(blocks.size());
  for (const auto& b : blocks) {
    w.string(b.name);
    w.u64(static_cast<std::uint64_t>(b.rows));
    w.u64(static_cast<std::uint64_t>(b.cols));
    w.u64(static_cast<std::uint64_t>(b.offset));
  }
  write_vector(w, ckpt.params.flat());
  w.u8(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    w.u64(static_cast<std::uint64_t>(ckpt.optimizer->step));
    write_vector(w, ckpt.optimizer->m);
    write_vector(w, ckpt.optimizer->v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  BinaryReader r(bytes);
  try {
    if (r.raw(kMagic.size()) != kMagic) throw FormatError("not a checkpoint file (bad magic)");
    const auto version = r.u32();
    if (version != kCheckpointFormatVersion) {
      throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    const auto header = nlohmann::json::parse(r.string());
    ckpt.model = model_config_from_json(header.at("model"));
    ckpt.train = header.at("train");
    ckpt.step = header.at("step").get<std::int64_t>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.extra = header.value("extra", nlohmann::json::object());
    const auto count = r.u64();
    std::vector<ParameterBlock> blocks;
    blocks.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      ParameterBlock b;
      b.name = r.string();
      b.rows = static_cast<Eigen::Index>(r.u64());
      b.cols = static_cast<Eigen::Index>(r.u64());
      b.offset = static_cast<Eigen::Index>(r.u64());
      blocks.push_back(std::move(b));
    }
    const Eigen::Index total = blocks.empty() ? 0 : blocks.back().offset + blocks.back().size();
    Eigen::VectorXd flat = read_vector(r, total);
    ckpt.params = ParameterSet::from_layout(std::move(blocks), std::move(flat));
    const ParameterSet expected(ckpt.model);
    if (expected.blocks().size() != ckpt.params.blocks().size() || expected.count() != ckpt.params.count()) {
      throw FormatError("checkpoint parameter table does not match its model config");
    }
    if (r.u8() != 0) {
      AdamWState st;
      st.step = static_cast<std::int64_t>(r.u64());
      st.m = read_vector(r, total);
      st.v = read_vector(r, total);
      ckpt.optimizer = std::move(st);
    }
    if (!r.done()) throw FormatError("trailing bytes after checkpoint");
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace sdefim
