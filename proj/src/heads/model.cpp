#include "rashomon/heads/model.hpp"

#include <cmath>

#include "json.hpp"

#include "rashomon/common/error.hpp"

namespace rashomon::heads {

using ad::DenseLayer;

HeadConfig scheme_config(int scheme, std::size_t input_dim) {
  HeadConfig cfg;
  switch (scheme) {
    case 1:
      cfg.feature_widths = {input_dim, 64, 32};
      cfg.widths = {32, 16, 16, 16, 1};
      cfg.batchnorm = true;
      break;
    case 2:
      cfg.widths = {input_dim, 16, 16, 16, 1};
      cfg.dropout = 0.3;
      break;
    case 3:
      cfg.widths = {input_dim, 16, 16, 16, 1};
      break;
    default:
      throw ConfigError("scheme must be 1, 2 or 3, got " + std::to_string(scheme));
  }
  return cfg;
}

HeadModel::HeadModel(const HeadConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.widths.size() < 2) throw ConfigError("head needs at least 2 layer widths");
  if (cfg.widths.back() != 1) throw ConfigError("head output width must be 1");
  if (!cfg.feature_widths.empty() && cfg.feature_widths.back() != cfg.widths.front())
    throw ConfigError("feature stack output width must equal head input width");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < cfg.feature_widths.size(); ++i)
    features_.emplace_back("feat" + std::to_string(i), cfg.feature_widths[i], cfg.feature_widths[i + 1], rng);
  for (std::size_t i = 0; i + 1 < cfg.widths.size(); ++i) {
    head_.emplace_back("head" + std::to_string(i), cfg.widths[i], cfg.widths[i + 1], rng);
    if (cfg.batchnorm && i + 2 < cfg.widths.size()) bn_.emplace_back("bn" + std::to_string(i), cfg.widths[i + 1]);
  }
}

std::size_t HeadModel::input_dim() const {
  return cfg_.feature_widths.empty() ? cfg_.widths.front() : cfg_.feature_widths.front();
}

ad::NodeId HeadModel::build(ad::Graph& g, ad::NodeId x) {
  ad::NodeId h = x;
  for (auto& l : features_) h = g.mish(l.apply(g, h));
  for (std::size_t i = 0; i < head_.size(); ++i) {
    h = head_[i].apply(g, h);
    if (i + 1 == head_.size()) break;
    if (!bn_.empty()) h = g.batchnorm(h, bn_[i]);
    h = g.mish(h);
    if (cfg_.dropout > 0.0) h = g.dropout(h, cfg_.dropout);
  }
  return h;
}

double HeadModel::score(std::span<const double> x) const {
  if (x.size() != input_dim())
    throw ShapeError("head expects " + std::to_string(input_dim()) + " inputs, got " + std::to_string(x.size()));
  std::vector<double> h(x.begin(), x.end());
  for (const auto& l : features_) {
    h = l.forward(h);
    for (auto& v : h) v = ad::mish(v);
  }
  for (std::size_t i = 0; i < head_.size(); ++i) {
    h = head_[i].forward(h);
    if (i + 1 == head_.size()) break;
    if (!bn_.empty()) h = ad::batchnorm_infer(h, bn_[i]);
    for (auto& v : h) v = ad::mish(v);
  }
  return h[0];
}

std::vector<ad::Parameter*> HeadModel::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& l : features_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto& l : head_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto& b : bn_) {
    out.push_back(&b.gamma);
    out.push_back(&b.beta);
  }
  return out;
}

void HeadModel::enable_masks() {
  for (auto& l : head_) {
    ad::Tensor m(l.weight.value.shape());
    m.fill(1.0);
    l.weight.mask = m;
  }
}

bool HeadModel::masked() const { return !head_.empty() && head_.front().weight.mask.has_value(); }

std::size_t HeadModel::active_head_weights() const {
  std::size_t n = 0;
  for (const auto& l : head_) n += l.weight.active_count();
  return n;
}

std::size_t HeadModel::total_head_weights() const {
  std::size_t n = 0;
  for (const auto& l : head_) n += l.weight.value.size();
  return n;
}

std::vector<std::size_t> HeadModel::input_support() const {
  std::vector<std::size_t> out;
  const auto& w = head_.front().weight;
  for (std::size_t i = 0; i < w.value.dim(0); ++i) {
    for (std::size_t j = 0; j < w.value.dim(1); ++j) {
      if (w.active(i * w.value.dim(1) + j)) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

io::Checkpoint HeadModel::to_checkpoint() const {
  io::Checkpoint ck;
  ck.kind = kHeadCheckpointKind;
  ck.widths.push_back(static_cast<std::uint32_t>(cfg_.feature_widths.size()));
  for (auto w : cfg_.feature_widths) ck.widths.push_back(static_cast<std::uint32_t>(w));
  ck.widths.push_back(static_cast<std::uint32_t>(cfg_.widths.size()));
  for (auto w : cfg_.widths) ck.widths.push_back(static_cast<std::uint32_t>(w));
  ck.widths.push_back(cfg_.batchnorm ? 1u : 0u);
  ck.widths.push_back(masked() ? 1u : 0u);
  ck.blobs.push_back({cfg_.dropout});
  for (auto* p : const_cast<HeadModel*>(this)->parameters()) ck.blobs.push_back(p->value.data());
  for (const auto& b : bn_) {
    ck.blobs.push_back(b.running_mean);
    ck.blobs.push_back(b.running_var);
  }
  if (masked())
    for (const auto& l : head_) ck.blobs.push_back(l.weight.mask->data());
  return ck;
}

HeadModel HeadModel::from_checkpoint(const io::Checkpoint& ck) {
  if (ck.kind != kHeadCheckpointKind) throw Error("checkpoint is not a classification head");
  std::size_t pos = 0;
  auto next = [&]() -> std::size_t {
    if (pos >= ck.widths.size()) throw Error("head checkpoint header truncated");
    return ck.widths[pos++];
  };
  HeadConfig cfg;
  for (std::size_t n = next(); n > 0; --n) cfg.feature_widths.push_back(next());
  cfg.widths.clear();
  for (std::size_t n = next(); n > 0; --n) cfg.widths.push_back(next());
  cfg.batchnorm = next() != 0;
  const bool has_masks = next() != 0;
  if (ck.blobs.empty() || ck.blobs[0].size() != 1) throw Error("head checkpoint missing dropout blob");
  cfg.dropout = ck.blobs[0][0];
  HeadModel model(cfg, 0);
  std::size_t b = 1;
  auto blob = [&](std::size_t expected) -> const std::vector<double>& {
    if (b >= ck.blobs.size()) throw Error("head checkpoint has too few blobs");
    if (ck.blobs[b].size() != expected) throw Error("head checkpoint blob " + std::to_string(b) + " has wrong size");
    return ck.blobs[b++];
  };
  for (auto* p : model.parameters()) p->value.data() = blob(p->value.size());
  for (auto& s : model.bn_) {
    s.running_mean = blob(s.width());
    s.running_var = blob(s.width());
  }
  if (has_masks) {
    model.enable_masks();
    for (auto& l : model.head_) l.weight.mask->data() = blob(l.weight.value.size());
  }
  if (b != ck.blobs.size()) throw Error("head checkpoint has trailing blobs");
  return model;
}

std::string HeadModel::mask_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : head_) {
    const auto& w = l.weight;
    nlohmann::json active = nlohmann::json::array();
    for (std::size_t i = 0; i < w.value.dim(0); ++i)
      for (std::size_t j = 0; j < w.value.dim(1); ++j)
        if (w.active(i * w.value.dim(1) + j)) active.push_back({i, j});
    layers.push_back({{"shape", {w.value.dim(0), w.value.dim(1)}}, {"active", active}});
  }
  return nlohmann::json{{"layers", layers}}.dump() + "\n";
}

synth::Label classify(double f) {
  if (!std::isfinite(f)) throw Error("classify: non-finite score");
  return f < 0.0 ? synth::Label::Interphase : synth::Label::Metaphase;
}

}  // namespace rashomon::heads
