#include "sdefim/model.hpp"

#include <cmath>

#include "sdefim/error.hpp"

namespace sdefim {

using ad::Matrix;
using ad::Var;

void ModelConfig::validate() const {
  if (hidden <= 0 || hidden % 4 != 0) throw ConfigError("hidden size must be a positive multiple of 4");
  if (heads <= 0 || hidden % heads != 0) throw ConfigError("hidden size must be divisible by the head count");
  if (encoder_layers < 0) throw ConfigError("encoder layers must be >= 0");
  if (trunk_depth < 1) throw ConfigError("trunk depth must be >= 1");
  if (d_max < 1) throw ConfigError("d_max must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (ff_multiplier < 1) throw ConfigError("feed-forward multiplier must be >= 1");
  if (!(norm_eps > 0.0)) throw ConfigError("norm eps must be positive");
  if (!(target_gap > 0.0)) throw ConfigError("target gap must be positive");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"hidden", cfg.hidden},
          {"encoder_layers", cfg.encoder_layers},
          {"trunk_depth", cfg.trunk_depth},
          {"d_max", cfg.d_max},
          {"heads", cfg.heads},
          {"dropout", cfg.dropout},
          {"attention", cfg.attention == AttentionKind::Linear ? "linear" : "softmax"},
          {"ff_multiplier", cfg.ff_multiplier},
          {"detach_uncertainty", cfg.detach_uncertainty},
          {"norm_eps", cfg.norm_eps},
          {"target_gap", cfg.target_gap}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.hidden = j.value("hidden", cfg.hidden);
    cfg.encoder_layers = j.value("encoder_layers", cfg.encoder_layers);
    cfg.trunk_depth = j.value("trunk_depth", cfg.trunk_depth);
    cfg.d_max = j.value("d_max", cfg.d_max);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.dropout = j.value("dropout", cfg.dropout);
    const std::string kind = j.value("attention", std::string("linear"));
    if (kind == "linear") {
      cfg.attention = AttentionKind::Linear;
    } else if (kind == "softmax") {
      cfg.attention = AttentionKind::Softmax;
    } else {
      throw ConfigError("unknown attention kind '" + kind + "'");
    }
    cfg.ff_multiplier = j.value("ff_multiplier", cfg.ff_multiplier);
    cfg.detach_uncertainty = j.value("detach_uncertainty", cfg.detach_uncertainty);
    cfg.norm_eps = j.value("norm_eps", cfg.norm_eps);
    cfg.target_gap = j.value("target_gap", cfg.target_gap);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace {

const char* branch_name(Branch b) {
  switch (b) {
    case Branch::Drift:
      return "drift";
    case Branch::Diffusion:
      return "diffusion";
    case Branch::Uncertainty:
      return "uncertainty";
  }
  return "?";
}

}  // namespace

void ParameterSet::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index offset = blocks_.empty() ? 0 : blocks_.back().offset + blocks_.back().size();
  by_name_[name] = static_cast<int>(blocks_.size());
  blocks_.push_back({name, rows, cols, offset});
}

ParameterSet::ParameterSet(const ModelConfig& cfg) {
  cfg.validate();
  const int n = cfg.hidden;
  const int q = n / 4;
  const int d = cfg.d_max;
  auto lin = [&](const std::string& name, int in, int out) {
    add(name + ".W", in, out);
    add(name + ".b", 1, out);
  };
  auto ln = [&](const std::string& name) {
    add(name + ".g", 1, n);
    add(name + ".b", 1, n);
  };
  auto block = [&](const std::string& name) {
    ln(name + ".ln1");
    for (const char* m : {".q", ".k", ".v", ".o"}) lin(name + ".attn" + m, n, n);
    ln(name + ".ln2");
    lin(name + ".ff1", n, cfg.ff_width());
    lin(name + ".ff2", cfg.ff_width(), n);
  };
  lin("embed.y", d, q);
  lin("embed.dy", d, q);
  lin("embed.dy2", d, q);
  lin("embed.dt", 1, q);
  for (int l = 0; l < cfg.encoder_layers; ++l) block("encoder." + std::to_string(l));
  ln("encoder.ln");
  lin("location", d, n);
  for (Branch b : {Branch::Drift, Branch::Diffusion, Branch::Uncertainty}) {
    const std::string br = branch_name(b);
    for (int m = 0; m < cfg.trunk_depth; ++m) block(br + "." + std::to_string(m));
    ln(br + ".ln");
    lin(br + ".head1", n, n);
    lin(br + ".head2", n, n);
    lin(br + ".head3", n, d);
  }
  flat_ = Eigen::VectorXd::Zero(blocks_.back().offset + blocks_.back().size());
}

ParameterSet ParameterSet::from_layout(std::vector<ParameterBlock> blocks, Eigen::VectorXd flat) {
  ParameterSet ps;
  Eigen::Index expected = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].offset != expected) throw FormatError("parameter table offsets are not contiguous");
    expected += blocks[i].size();
    ps.by_name_[blocks[i].name] = static_cast<int>(i);
  }
  if (expected != flat.size()) throw FormatError("parameter table does not match blob size");
  ps.blocks_ = std::move(blocks);
  ps.flat_ = std::move(flat);
  return ps;
}

const ParameterBlock& ParameterSet::block(const std::string& name) const { return blocks_[index(name)]; }

int ParameterSet::index(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ConfigError("unknown parameter block '" + name + "'");
  return it->second;
}

Eigen::MatrixXd ParameterSet::matrix(int i) const {
  const auto& b = blocks_[i];
  return Eigen::Map<const Eigen::MatrixXd>(flat_.data() + b.offset, b.rows, b.cols);
}

void ParameterSet::set_matrix(int i, const Eigen::MatrixXd& value) {
  const auto& b = blocks_[i];
  if (value.rows() != b.rows || value.cols() != b.cols) throw DimensionError("parameter block shape mismatch");
  Eigen::Map<Eigen::MatrixXd>(flat_.data() + b.offset, b.rows, b.cols) = value;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (blocks_.size() != other.blocks_.size() || flat_.size() != other.flat_.size()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& a = blocks_[i];
    const auto& b = other.blocks_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols || a.offset != b.offset) return false;
  }
  return flat_ == other.flat_;
}

ParameterSet initialize_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  ParameterSet ps(cfg);
  RandomStream root(seed, {0x1417});
  for (int i = 0; i < static_cast<int>(ps.blocks().size()); ++i) {
    const auto& b = ps.blocks()[i];
    const bool gain = b.name.ends_with(".g");
    const bool bias = b.name.ends_with(".b");
    Eigen::MatrixXd m(b.rows, b.cols);
    if (gain) {
      m.setOnes();
    } else if (bias) {
      m.setZero();
    } else {
      RandomStream rng = root.split(static_cast<std::uint64_t>(i));
      const double sd = 1.0 / std::sqrt(static_cast<double>(b.rows));
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = sd * rng.normal();
      }
    }
    ps.set_matrix(i, m);
  }
  return ps;
}

Eigen::Index parameter_count(const ModelConfig& cfg) { return ParameterSet(cfg).count(); }

Network::Network(const ModelConfig& cfg, const ParameterSet& params, ad::Tape& tape, bool trainable,
                 RandomStream* dropout_rng)
    : cfg_(cfg), params_(params), tape_(tape), dropout_rng_(dropout_rng) {
  cfg_.validate();
  vars_.reserve(params.blocks().size());
  for (int i = 0; i < static_cast<int>(params.blocks().size()); ++i) {
    Matrix m = params.matrix(i);
    vars_.push_back(trainable ? tape.leaf(std::move(m)) : tape.constant(std::move(m)));
  }
}

Var Network::p(const std::string& name) const { return vars_[params_.index(name)]; }

Var Network::linear(Var x, const std::string& prefix) const {
  return ad::add_row(ad::matmul(x, p(prefix + ".W")), p(prefix + ".b"));
}

Var Network::norm(Var x, const std::string& prefix) const {
  return ad::layer_norm(x, p(prefix + ".g"), p(prefix + ".b"), cfg_.norm_eps);
}

Var Network::dropout(Var x) {
  if (dropout_rng_ == nullptr || cfg_.dropout <= 0.0) return x;
  const double keep = 1.0 - cfg_.dropout;
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < mask.cols(); ++c) {
    for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = dropout_rng_->bernoulli(keep) ? 1.0 / keep : 0.0;
  }
  return ad::mul_const(x, mask);
}

Var Network::feed_forward(Var x, const std::string& prefix) {
  return linear(ad::gelu(linear(x, prefix + ".ff1")), prefix + ".ff2");
}

Matrix Network::pad(const Matrix& x) const {
  if (x.cols() > cfg_.d_max) {
    throw DimensionError("input of dimension " + std::to_string(x.cols()) + " exceeds d_max " +
                         std::to_string(cfg_.d_max));
  }
  Matrix out = Matrix::Zero(x.rows(), cfg_.d_max);
  out.leftCols(x.cols()) = x;
  return out;
}

Var Network::embed(const ObservationSet& set) {
  if (set.empty()) throw DataError("cannot embed an empty context");
  Matrix log_gap = set.dtau.array().log().matrix();
  std::vector<Var> parts = {
      linear(tape_.constant(pad(set.y)), "embed.y"),
      linear(tape_.constant(pad(set.dy)), "embed.dy"),
      linear(tape_.constant(pad(set.dy2)), "embed.dy2"),
      linear(tape_.constant(std::move(log_gap)), "embed.dt"),
  };
  return dropout(ad::concat_cols(parts));
}

namespace {

BranchContext::Block summarize(const ModelConfig& cfg, Var kv_in, Var Wk, Var bk, Var Wv, Var bv) {
  BranchContext::Block block;
  const Var keys = ad::add_row(ad::matmul(kv_in, Wk), bk);
  const Var values = ad::add_row(ad::matmul(kv_in, Wv), bv);
  const int dh = cfg.hidden / cfg.heads;
  for (int h = 0; h < cfg.heads; ++h) {
    const Var kh = ad::slice_cols(keys, h * dh, dh);
    const Var vh = ad::slice_cols(values, h * dh, dh);
    if (cfg.attention == AttentionKind::Linear) {
      const Var fk = ad::elu_plus_one(kh);
      block.kv.push_back(ad::matmul_tn(fk, vh));
      block.ksum.push_back(ad::col_sum(fk));
    } else {
      block.kv.push_back(kh);
      block.ksum.push_back(vh);
    }
  }
  return block;
}

}  // namespace

Var Network::attend(Var q_in, const BranchContext::Block& block, const std::string& prefix) {
  const Var queries = linear(q_in, prefix + ".q");
  const int dh = cfg_.hidden / cfg_.heads;
  std::vector<Var> outs;
  for (int h = 0; h < cfg_.heads; ++h) {
    const Var qh = ad::slice_cols(queries, h * dh, dh);
    if (cfg_.attention == AttentionKind::Linear) {
      const Var fq = ad::elu_plus_one(qh);
      outs.push_back(ad::div_col(ad::matmul(fq, block.kv[h]), ad::matmul_nt(fq, block.ksum[h])));
    } else {
      const Var scores = ad::scale(ad::matmul_nt(qh, block.kv[h]), 1.0 / std::sqrt(static_cast<double>(dh)));
      outs.push_back(ad::matmul(ad::row_softmax(scores), block.ksum[h]));
    }
  }
  return linear(ad::concat_cols(outs), prefix + ".o");
}

Var Network::attention(Var q_in, Var kv_in, const std::string& prefix) {
  const auto block =
      summarize(cfg_, kv_in, p(prefix + ".k.W"), p(prefix + ".k.b"), p(prefix + ".v.W"), p(prefix + ".v.b"));
  return attend(q_in, block, prefix);
}

Var Network::encode(Var h) {
  for (int l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string pre = "encoder." + std::to_string(l);
    const Var a = norm(h, pre + ".ln1");
    h = ad::add(h, dropout(attention(a, a, pre + ".attn")));
    h = ad::add(h, dropout(feed_forward(norm(h, pre + ".ln2"), pre)));
  }
  return norm(h, "encoder.ln");
}

BranchContext Network::prepare(Branch branch, Var context) {
  BranchContext ctx;
  const std::string br = branch_name(branch);
  for (int m = 0; m < cfg_.trunk_depth; ++m) {
    const std::string pre = br + "." + std::to_string(m) + ".attn";
    ctx.blocks.push_back(
        summarize(cfg_, context, p(pre + ".k.W"), p(pre + ".k.b"), p(pre + ".v.W"), p(pre + ".v.b")));
  }
  return ctx;
}

Var Network::query(Branch branch, const BranchContext& ctx, Var locations) {
  const std::string br = branch_name(branch);
  Var h = linear(locations, "location");
  for (int m = 0; m < cfg_.trunk_depth; ++m) {
    const std::string pre = br + "." + std::to_string(m);
    h = ad::add(h, dropout(attend(norm(h, pre + ".ln1"), ctx.blocks[m], pre + ".attn")));
    h = ad::add(h, dropout(feed_forward(norm(h, pre + ".ln2"), pre)));
  }
  h = norm(h, br + ".ln");
  h = ad::gelu(linear(h, br + ".head1"));
  h = ad::gelu(linear(h, br + ".head2"));
  Var out = linear(h, br + ".head3");
  switch (branch) {
    case Branch::Drift:
      return out;
    case Branch::Diffusion:
      return ad::softplus(out);
    case Branch::Uncertainty:
      return ad::clamp(ad::slice_cols(out, 0, 1), -20.0, 20.0);
  }
  return out;
}

std::array<BranchContext, 3> Network::prepare_all(Var context, const std::optional<Matrix>& frozen_uncertainty) {
  Var u_context = context;
  if (frozen_uncertainty) {
    u_context = tape_.constant(*frozen_uncertainty);
  } else if (cfg_.detach_uncertainty) {
    u_context = ad::detach(context);
  }
  return {prepare(Branch::Drift, context), prepare(Branch::Diffusion, context),
          prepare(Branch::Uncertainty, u_context)};
}

HeadOutputs Network::heads(const std::array<BranchContext, 3>& ctx, Var locations) {
  return {query(Branch::Drift, ctx[0], locations), query(Branch::Diffusion, ctx[1], locations),
          query(Branch::Uncertainty, ctx[2], locations)};
}

InferenceSession::InferenceSession(const ModelConfig& cfg, const ParameterSet& params, const ObservationSet& raw)
    : cfg_(cfg), params_(params), dim_(raw.dim) {
  if (raw.empty()) throw DataError("inference needs a non-empty context");
  if (raw.dim > cfg.d_max) {
    throw DimensionError("context dimension " + std::to_string(raw.dim) + " exceeds model d_max " +
                         std::to_string(cfg.d_max));
  }
  auto [normalized, rec] = fit_and_normalize(raw, cfg.target_gap);
  norm_ = std::move(rec);
  tape_ = std::make_unique<ad::Tape>(false);
  net_ = std::make_unique<Network>(cfg_, params_, *tape_, false);
  ctx_ = net_->prepare_all(net_->encode(net_->embed(normalized)));
  mark_ = tape_->size();
}

VectorFieldEstimate InferenceSession::estimate(const Eigen::MatrixXd& locations) const {
  if (locations.cols() != dim_) {
    throw DimensionError("query dimension " + std::to_string(locations.cols()) + " does not match context dimension " +
                         std::to_string(dim_));
  }
  VectorFieldEstimate est;
  est.locations = locations;
  est.normalization = norm_;
  const Eigen::Index q = locations.rows();
  est.drift.resize(q, dim_);
  est.amplitude.resize(q, dim_);
  est.uncertainty.resize(q);
  if (q == 0) return est;
  const Var x = tape_->constant(net_->pad(normalize_locations(locations, norm_)));
  const HeadOutputs out = net_->heads(ctx_, x);
  const Eigen::RowVectorXd drift_scale = (norm_.time_factor * norm_.scale).transpose();
  const Eigen::RowVectorXd amp_scale = (std::sqrt(norm_.time_factor) * norm_.scale).transpose();
  est.drift = out.drift.value().leftCols(dim_).array().rowwise() * drift_scale.array();
  est.amplitude = out.amplitude.value().leftCols(dim_).array().rowwise() * amp_scale.array();
  est.uncertainty = out.uncertainty.value().col(0);
  tape_->truncate(mark_);
  return est;
}

void InferenceSession::evaluate(const Eigen::MatrixXd& states, Eigen::MatrixXd& drift, Eigen::MatrixXd& amplitude) const {
  if (states.rows() == 0) {
    drift.resize(0, dim_);
    amplitude.resize(0, dim_);
    return;
  }
  const Var x = tape_->constant(net_->pad(normalize_locations(states, norm_)));
  const Var f = net_->query(Branch::Drift, ctx_[0], x);
  const Var a = net_->query(Branch::Diffusion, ctx_[1], x);
  const Eigen::RowVectorXd drift_scale = (norm_.time_factor * norm_.scale).transpose();
  const Eigen::RowVectorXd amp_scale = (std::sqrt(norm_.time_factor) * norm_.scale).transpose();
  drift = f.value().leftCols(dim_).array().rowwise() * drift_scale.array();
  amplitude = a.value().leftCols(dim_).array().rowwise() * amp_scale.array();
  tape_->truncate(mark_);
}

VectorFieldEstimate infer(const ModelConfig& cfg, const ParameterSet& params, const ObservationSet& raw_context,
                          const Eigen::MatrixXd& locations) {
  return InferenceSession(cfg, params, raw_context).estimate(locations);
}

nlohmann::json to_json(const VectorFieldEstimate& est) {
  auto rows = [](const Eigen::MatrixXd& m) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      out.push_back(std::move(row));
    }
    return out;
  };
  nlohmann::json u = nlohmann::json::array();
  for (Eigen::Index i = 0; i < est.uncertainty.size(); ++i) u.push_back(est.uncertainty[i]);
  return {{"locations", rows(est.locations)},
          {"drift", rows(est.drift)},
          {"amplitude", rows(est.amplitude)},
          {"uncertainty", u},
          {"normalization", to_json(est.normalization)}};
}

}  // namespace sdefim
