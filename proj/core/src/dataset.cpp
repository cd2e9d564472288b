#include "sdefim/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "sdefim/binary_io.hpp"
#include "sdefim/corruption.hpp"
#include "sdefim/error.hpp"
#include "sdefim/parallel.hpp"

namespace sdefim {

namespace {

constexpr std::string_view kMagic = "SDEFIMDS";
constexpr std::uint64_t kAssignStream = ~std::uint64_t{0};
constexpr std::uint64_t kThinStream = ~std::uint64_t{0} - 1;
constexpr std::uint64_t kNoiseStream = ~std::uint64_t{0} - 2;

struct SlotOutcome {
  EquationRecord record;
  std::int64_t attempts = 0;
  std::int64_t non_finite = 0;
  std::int64_t threshold = 0;
};

SlotOutcome generate_slot(int d, std::uint64_t slot, const PriorConfig& prior, const CorruptionConfig& corruption,
                          const RandomStream& root) {
  const RandomStream slot_stream = root.split(slot);
  RandomStream assign = slot_stream.split(kAssignStream);
  CorruptionInfo info;
  info.preset = static_cast<int>(assign.uniform_int(0, static_cast<std::int64_t>(prior.presets.size()) - 1));
  info.noisy = assign.bernoulli(corruption.noisy_fraction);
  info.irregular = assign.bernoulli(corruption.irregular_fraction);
  const double sigma_draw = assign.uniform(0.0, corruption.noise_scale_max);
  const double eta_draw = assign.uniform(corruption.survival_min, 1.0);
  if (info.noisy) info.sigma = sigma_draw;
  if (info.irregular) info.eta = eta_draw;

  SlotOutcome out;
  for (std::int64_t attempt = 0; attempt < prior.max_attempts; ++attempt) {
    RandomStream rng = slot_stream.split(static_cast<std::uint64_t>(attempt));
    ++out.attempts;
    auto result = generate_equation(d, info.preset, prior, rng);
    if (auto* rej = std::get_if<Rejected>(&result)) {
      (rej->reason == RejectReason::NonFinite ? out.non_finite : out.threshold) += 1;
      continue;
    }
    EquationRecord record = std::move(std::get<EquationRecord>(result));
    PathBundle observed = record.clean;
    if (info.irregular) observed = thin_bernoulli(observed, info.eta, slot_stream.split(kThinStream));
    if (info.noisy) observed = add_relative_noise(observed, info.sigma, slot_stream.split(kNoiseStream));
    record.observed = std::move(observed);
    record.corruption = info;
    if (!prior.keep_clean) record.clean = PathBundle{record.clean.dim, {}, {}};
    out.record = std::move(record);
    return out;
  }
  throw NumericError("slot " + std::to_string(slot) + " (" + std::to_string(d) + "D) exceeded " +
                     std::to_string(prior.max_attempts) + " rejection attempts");
}

void write_polynomial(BinaryWriter& w, const Polynomial& p) {
  w.u32(static_cast<std::uint32_t>(p.terms().size()));
  for (const auto& t : p.terms()) {
    for (int e : t.index.exponents) w.u32(static_cast<std::uint32_t>(e));
    w.f64(t.coefficient);
  }
}

Polynomial read_polynomial(BinaryReader& r, int arity) {
  const auto n = r.u32();
  std::vector<Term> terms;
  terms.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    MultiIndex idx;
    for (int j = 0; j < arity; ++j) idx.exponents.push_back(static_cast<int>(r.u32()));
    terms.push_back(Term{std::move(idx), r.f64()});
  }
  return Polynomial(arity, std::move(terms));
}

void write_bundle(BinaryWriter& w, const PathBundle& b) {
  w.u32(static_cast<std::uint32_t>(b.dim));
  w.u32(static_cast<std::uint32_t>(b.paths.size()));
  for (std::size_t k = 0; k < b.paths.size(); ++k) {
    const auto& p = b.paths[k];
    w.u8(k < b.divergence.size() ? static_cast<std::uint8_t>(b.divergence[k]) : 0);
    w.u32(static_cast<std::uint32_t>(p.times.size()));
    for (double t : p.times) w.f64(t);
    for (Eigen::Index i = 0; i < p.states.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.states.cols(); ++j) w.f64(p.states(i, j));
    }
  }
}

PathBundle read_bundle(BinaryReader& r) {
  PathBundle b;
  b.dim = static_cast<int>(r.u32());
  const auto k = r.u32();
  b.paths.resize(k);
  b.divergence.resize(k);
  for (std::uint32_t i = 0; i < k; ++i) {
    const auto div = r.u8();
    if (div > 2) throw FormatError("invalid divergence flag");
    b.divergence[i] = static_cast<Divergence>(div);
    const auto len = r.u32();
    auto& p = b.paths[i];
    p.times.resize(len);
    for (auto& t : p.times) t = r.f64();
    p.states.resize(len, b.dim);
    for (std::uint32_t a = 0; a < len; ++a) {
      for (int j = 0; j < b.dim; ++j) p.states(a, j) = r.f64();
    }
  }
  return b;
}

std::string encode_record(const EquationRecord& rec) {
  BinaryWriter w;
  const int d = rec.system.dim();
  w.u32(static_cast<std::uint32_t>(d));
  for (const auto& p : rec.system.drift()) write_polynomial(w, p);
  for (const auto& p : rec.system.diffusion_pre()) write_polynomial(w, p);
  w.u32(static_cast<std::uint32_t>(rec.corruption.preset));
  w.u8(rec.corruption.noisy ? 1 : 0);
  w.u8(rec.corruption.irregular ? 1 : 0);
  w.f64(rec.corruption.sigma);
  w.f64(rec.corruption.eta);
  write_bundle(w, rec.clean);
  write_bundle(w, rec.observed);
  return w.take();
}

EquationRecord decode_record(std::string_view bytes) {
  BinaryReader r(bytes);
  EquationRecord rec;
  const int d = static_cast<int>(r.u32());
  if (d < 1) throw FormatError("record with non-positive dimension");
  std::vector<Polynomial> f, g;
  for (int i = 0; i < d; ++i) f.push_back(read_polynomial(r, d));
  for (int i = 0; i < d; ++i) g.push_back(read_polynomial(r, d));
  rec.system = SdeSystem(std::move(f), std::move(g));
  rec.corruption.preset = static_cast<int>(r.u32());
  rec.corruption.noisy = r.u8() != 0;
  rec.corruption.irregular = r.u8() != 0;
  rec.corruption.sigma = r.f64();
  rec.corruption.eta = r.f64();
  rec.clean = read_bundle(r);
  rec.observed = read_bundle(r);
  if (!r.done()) throw FormatError("trailing bytes in dataset record");
  return rec;
}

}  // namespace

std::vector<std::int64_t> allocate_dimensions(std::int64_t count, const std::vector<int>& ratio) {
  const auto total = std::accumulate(ratio.begin(), ratio.end(), std::int64_t{0});
  if (total <= 0) throw ConfigError("dimension ratios sum to zero");
  std::vector<std::int64_t> out(ratio.size());
  std::vector<std::pair<std::int64_t, std::size_t>> remainders;
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < ratio.size(); ++i) {
    out[i] = count * ratio[i] / total;
    assigned += out[i];
    remainders.emplace_back(count * ratio[i] % total, i);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second > b.second;
  });
  for (std::size_t i = 0; assigned < count; ++i, ++assigned) ++out[remainders[i % remainders.size()].second];
  return out;
}

Dataset generate_dataset(const PriorConfig& prior, const CorruptionConfig& corruption, std::int64_t count,
                         std::uint64_t seed) {
  prior.validate();
  corruption.validate();
  if (count < 1) throw ConfigError("dataset needs at least one record");
  const auto per_dim = allocate_dimensions(count, prior.dim_ratio);
  std::vector<int> slot_dims;
  slot_dims.reserve(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < per_dim.size(); ++i) {
    for (std::int64_t c = 0; c < per_dim[i]; ++c) slot_dims.push_back(static_cast<int>(i) + 1);
  }

  const RandomStream root(seed, {0xda7a});
  std::vector<SlotOutcome> outcomes(slot_dims.size());
  parallel_for(slot_dims.size(), [&](std::size_t slot) {
    outcomes[slot] = generate_slot(slot_dims[slot], slot, prior, corruption, root);
  });

  Dataset ds;
  ds.prior = prior;
  ds.corruption = corruption;
  ds.seed = seed;
  ds.stats.resize(prior.d_max);
  for (int d = 1; d <= prior.d_max; ++d) ds.stats[d - 1].dim = d;
  ds.records.reserve(outcomes.size());
  for (std::size_t slot = 0; slot < outcomes.size(); ++slot) {
    auto& st = ds.stats[slot_dims[slot] - 1];
    ++st.accepted;
    st.attempts += outcomes[slot].attempts;
    st.non_finite += outcomes[slot].non_finite;
    st.threshold += outcomes[slot].threshold;
    ds.records.push_back(std::move(outcomes[slot].record));
  }
  return ds;
}

nlohmann::json dataset_config_json(const Dataset& dataset) {
  return {{"format_version", kDatasetFormatVersion},
          {"prior", to_json(dataset.prior)},
          {"corruption", to_json(dataset.corruption)},
          {"seed", dataset.seed},
          {"count", dataset.records.size()}};
}

std::string encode_dataset(const Dataset& dataset) {
  BinaryWriter w;
  w.raw(kMagic);
  w.u32(kDatasetFormatVersion);
  w.string(dataset_config_json(dataset).dump());
  w.u64(dataset.records.size());
  for (const auto& rec : dataset.records) w.string(encode_record(rec));
  return w.take();
}

Dataset decode_dataset(std::string_view bytes) {
  BinaryReader r(bytes);
  if (bytes.size() < kMagic.size() || r.raw(kMagic.size()) != kMagic) throw FormatError("not a dataset file");
  const auto version = r.u32();
  if (version != kDatasetFormatVersion) {
    throw FormatError("unsupported dataset format version " + std::to_string(version));
  }
  Dataset ds;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt dataset header: ") + e.what());
  }
  ds.prior = prior_config_from_json(header.at("prior"));
  ds.corruption = corruption_config_from_json(header.at("corruption"));
  ds.seed = header.at("seed").get<std::uint64_t>();
  const auto n = r.u64();
  ds.records.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) ds.records.push_back(decode_record(r.string()));
  if (!r.done()) throw FormatError("trailing bytes after dataset records");
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  write_file_atomic(path, encode_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

nlohmann::json to_json(const PathBundle& bundle) {
  nlohmann::json j;
  j["dim"] = bundle.dim;
  j["paths"] = nlohmann::json::array();
  for (std::size_t k = 0; k < bundle.paths.size(); ++k) {
    const auto& p = bundle.paths[k];
    nlohmann::json states = nlohmann::json::array();
    for (Eigen::Index i = 0; i < p.states.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < p.states.cols(); ++c) row.push_back(p.states(i, c));
      states.push_back(std::move(row));
    }
    j["paths"].push_back({{"times", p.times},
                          {"states", std::move(states)},
                          {"divergence", k < bundle.divergence.size() ? static_cast<int>(bundle.divergence[k]) : 0}});
  }
  return j;
}

nlohmann::json dataset_to_json(const Dataset& dataset) {
  nlohmann::json j = dataset_config_json(dataset);
  j["records"] = nlohmann::json::array();
  for (const auto& rec : dataset.records) {
    j["records"].push_back({{"system", to_json(rec.system)},
                            {"corruption",
                             {{"preset", rec.corruption.preset},
                              {"noisy", rec.corruption.noisy},
                              {"irregular", rec.corruption.irregular},
                              {"sigma", rec.corruption.sigma},
                              {"eta", rec.corruption.eta}}},
                            {"clean", to_json(rec.clean)},
                            {"observed", to_json(rec.observed)}});
  }
  return j;
}

nlohmann::json manifest_json(const Dataset& dataset) {
  nlohmann::json j = dataset_config_json(dataset);
  nlohmann::json per_dim = nlohmann::json::array();
  for (const auto& st : dataset.stats) {
    per_dim.push_back({{"dim", st.dim},
                       {"accepted", st.accepted},
                       {"attempts", st.attempts},
                       {"rejected_non_finite", st.non_finite},
                       {"rejected_threshold", st.threshold},
                       {"rejection_rate", st.rejection_rate()}});
  }
  j["per_dimension"] = std::move(per_dim);
  return j;
}

}  // namespace sdefim
