#include "camalign/model.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "camalign/errors.hpp"
#include "camalign/rng.hpp"

using nlohmann::json;

namespace camalign {

// --- configuration -----------------------------------------------------------

ModelConfig ModelConfig::desk_default(int height, int width, int objectives) {
  ModelConfig c;
  c.height = height;
  c.width = width;
  c.objectives = objectives;
  c.blocks = {{8, 1, true}, {16, 1, true}, {32, 1, true}, {32, 1, false}};
  return c;
}

FeatureShape ModelConfig::activation_shape(std::size_t block) const {
  FeatureShape in{1, height, width};
  for (std::size_t i = 0;; ++i) {
    const auto& b = blocks.at(i);
    const FeatureShape act{b.out_channels, (in.height - 1) / b.stride + 1, (in.width - 1) / b.stride + 1};
    if (i == block) return act;
    in = b.pool ? FeatureShape{act.channels, act.height / 2, act.width / 2} : act;
  }
}

FeatureShape ModelConfig::output_shape(std::size_t block) const {
  const auto act = activation_shape(block);
  return blocks.at(block).pool ? FeatureShape{act.channels, act.height / 2, act.width / 2} : act;
}

void ModelConfig::validate() const {
  if (height < 1 || width < 1) throw ConfigError("model: input size must be positive");
  if (blocks.size() < 2) throw ConfigError("model: at least two conv blocks are required");
  if (objectives < 1) throw ConfigError("model: at least one objective is required");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.out_channels < 1 || b.stride < 1) throw ConfigError("model: block channels and stride must be positive");
    const auto act = activation_shape(i);
    if (act.height < 1 || act.width < 1 || (b.pool && (act.height < 2 || act.width < 2))) {
      throw ConfigError("model: block " + std::to_string(i + 1) + " collapses the spatial extent");
    }
  }
  const auto last = activation_shape(blocks.size() - 1);
  if (last.channels < 4) throw ConfigError("model: last_conv needs at least 4 channels");
  if (last.height < 4 || last.width < 4) throw ConfigError("model: last_conv spatial size must be at least 4x4");
}

std::vector<std::string> ModelConfig::layer_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i + 1 < blocks.size(); ++i) names.push_back("conv" + std::to_string(i + 1));
  if (!blocks.empty()) names.emplace_back(kLastConv);
  return names;
}

int ModelConfig::layer_index(std::string_view name) const {
  const auto names = layer_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void to_json(json& j, const ModelConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.blocks) blocks.push_back({{"out_channels", b.out_channels}, {"stride", b.stride}, {"pool", b.pool}});
  j = json{{"input", {c.height, c.width, 1}}, {"blocks", blocks}, {"objectives", c.objectives}};
}

void from_json(const json& j, ModelConfig& c) {
  const auto input = j.at("input").get<std::vector<int>>();
  if (input.size() != 3 || input[2] != 1) throw ConfigError("model: input must be [H, W, 1]");
  c.height = input[0];
  c.width = input[1];
  c.blocks.clear();
  for (const auto& b : j.at("blocks")) {
    c.blocks.push_back({b.at("out_channels").get<int>(), b.value("stride", 1), b.value("pool", false)});
  }
  c.objectives = j.at("objectives").get<int>();
}

// --- parameters --------------------------------------------------------------

const ParamTensor& ModelState::param(std::string_view name) const {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

ParamTensor& ModelState::param(std::string_view name) {
  return const_cast<ParamTensor&>(static_cast<const ModelState&>(*this).param(name));
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.values.size();
  return n;
}

namespace {

constexpr std::uint64_t kHeadStream = 0x68656164;  // "head"

std::vector<ParamTensor> expected_layout(const ModelConfig& c) {
  std::vector<ParamTensor> out;
  const auto names = c.layer_names();
  int in_channels = 1;
  for (std::size_t i = 0; i < c.blocks.size(); ++i) {
    const int oc = c.blocks[i].out_channels;
    out.push_back({names[i] + ".weight", {oc, in_channels, 3, 3}, {}});
    out.push_back({names[i] + ".bias", {oc}, {}});
    in_channels = oc;
  }
  out.push_back({"head.weight", {c.objectives, in_channels}, {}});
  out.push_back({"head.bias", {c.objectives}, {}});
  for (auto& p : out) {
    std::size_t n = 1;
    for (int d : p.shape) n *= static_cast<std::size_t>(d);
    p.values.assign(n, 0.0F);
  }
  return out;
}

void fill_uniform(ParamTensor& p, double bound, Rng& rng) {
  for (auto& v : p.values) v = static_cast<float>(rng.uniform(-bound, bound));
}

void init_head(std::vector<ParamTensor>& params, std::uint64_t seed) {
  auto& w = params[params.size() - 2];
  auto& b = params.back();
  Rng rng(derive_seed(seed, {kHeadStream}));
  fill_uniform(w, 1.0 / std::sqrt(static_cast<double>(w.shape[1])), rng);
  std::fill(b.values.begin(), b.values.end(), 0.0F);
}

}  // namespace

ModelState init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState state;
  state.config = config;
  state.stage = "scratch";
  state.params = expected_layout(config);
  for (std::size_t i = 0; i + 2 < state.params.size(); i += 2) {
    auto& w = state.params[i];
    const double fan_in = static_cast<double>(w.shape[1]) * 9.0;
    Rng rng(derive_seed(seed, {i}));
    fill_uniform(w, std::sqrt(6.0 / fan_in), rng);
  }
  init_head(state.params, seed);
  return state;
}

void validate(const ModelState& state) {
  state.config.validate();
  const auto layout = expected_layout(state.config);
  if (layout.size() != state.params.size()) throw ShapeError("model state: wrong number of parameter tensors");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& p = state.params[i];
    if (p.name != layout[i].name || p.shape != layout[i].shape || p.values.size() != layout[i].values.size()) {
      throw ShapeError("model state: parameter '" + p.name + "' does not match the configuration");
    }
    for (float v : p.values) {
      if (!std::isfinite(v)) throw NumericError(p.name, "model state: non-finite value in '" + p.name + "'");
    }
  }
}

ModelState swap_head(const ModelState& state, int objectives, std::uint64_t seed) {
  if (objectives < 1) throw ConfigError("swap_head: objectives must be >= 1");
  ModelState out = state;
  out.config.objectives = objectives;
  const int channels = state.config.blocks.back().out_channels;
  auto& w = out.params[out.params.size() - 2];
  auto& b = out.params.back();
  w.shape = {objectives, channels};
  w.values.assign(static_cast<std::size_t>(objectives) * channels, 0.0F);
  b.shape = {objectives};
  b.values.assign(static_cast<std::size_t>(objectives), 0.0F);
  init_head(out.params, seed);
  out.stage = "fine-tune";
  return out;
}

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// --- network evaluation ------------------------------------------------------

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct Geometry {
  FeatureShape in;
  FeatureShape act;
  FeatureShape out;
  int stride = 1;
  bool pool = false;
};

/// Batched evaluation of a ModelState in precision T. Feature maps are stored
/// as [channels x (batch * plane)] row-major matrices.
template <typename T>
class Network {
 public:
  struct BlockCache {
    Mat<T> col;  // im2col of the block input
    Mat<T> act;  // post-ReLU, pre-pool
    Mat<T> out;  // pooled output (empty when the block does not pool)
    std::vector<int> argmax;
  };

  struct Cache {
    int batch = 0;
    Mat<T> input;
    std::vector<BlockCache> blocks;
    Mat<T> pooled;  // C x B
    Mat<T> logits;  // M x B

    const Mat<T>& block_output(std::size_t i) const { return blocks[i].out.size() ? blocks[i].out : blocks[i].act; }
  };

  struct Grads {
    std::vector<Mat<T>> weight;
    std::vector<Vec<T>> bias;
    Mat<T> head_weight;
    Vec<T> head_bias;
  };

  explicit Network(const ModelState& state) : config_(state.config) {
    validate(state);
    FeatureShape in{1, config_.height, config_.width};
    for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
      const auto& b = config_.blocks[i];
      Geometry g;
      g.in = in;
      g.act = config_.activation_shape(i);
      g.out = config_.output_shape(i);
      g.stride = b.stride;
      g.pool = b.pool;
      geometry_.push_back(g);
      in = g.out;

      const auto& w = state.params[2 * i];
      const auto& bias = state.params[2 * i + 1];
      Mat<T> wm(g.act.channels, g.in.channels * 9);
      for (Eigen::Index k = 0; k < wm.size(); ++k) wm.data()[k] = static_cast<T>(w.values[static_cast<std::size_t>(k)]);
      Vec<T> bv(g.act.channels);
      for (Eigen::Index k = 0; k < bv.size(); ++k) bv[k] = static_cast<T>(bias.values[static_cast<std::size_t>(k)]);
      weight_.push_back(std::move(wm));
      bias_.push_back(std::move(bv));
    }
    const auto& hw = state.params[state.params.size() - 2];
    const auto& hb = state.params.back();
    head_weight_.resize(config_.objectives, in.channels);
    for (Eigen::Index k = 0; k < head_weight_.size(); ++k) {
      head_weight_.data()[k] = static_cast<T>(hw.values[static_cast<std::size_t>(k)]);
    }
    head_bias_.resize(config_.objectives);
    for (Eigen::Index k = 0; k < head_bias_.size(); ++k) head_bias_[k] = static_cast<T>(hb.values[static_cast<std::size_t>(k)]);
  }

  const Geometry& geometry(std::size_t i) const { return geometry_[i]; }

  void forward(std::span<const Image* const> images, Cache& cache) const {
    const int batch = static_cast<int>(images.size());
    const int plane = config_.height * config_.width;
    cache.batch = batch;
    cache.input.resize(1, static_cast<Eigen::Index>(batch) * plane);
    for (int b = 0; b < batch; ++b) {
      const Image& img = *images[static_cast<std::size_t>(b)];
      if (img.height != config_.height || img.width != config_.width) {
        throw ShapeError("forward: image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                         ", model expects " + std::to_string(config_.height) + "x" + std::to_string(config_.width));
      }
      for (int p = 0; p < plane; ++p) cache.input(0, static_cast<Eigen::Index>(b) * plane + p) = static_cast<T>(img.pixels[static_cast<std::size_t>(p)]);
    }
    cache.blocks.resize(geometry_.size());
    const Mat<T>* in = &cache.input;
    for (std::size_t i = 0; i < geometry_.size(); ++i) {
      auto& bc = cache.blocks[i];
      const auto& g = geometry_[i];
      im2col(*in, g, batch, bc.col);
      bc.act.noalias() = weight_[i] * bc.col;
      bc.act.colwise() += bias_[i];
      bc.act = bc.act.cwiseMax(T(0));
      if (g.pool) {
        max_pool(bc.act, g, batch, bc.out, bc.argmax);
      } else {
        bc.out.resize(0, 0);
        bc.argmax.clear();
      }
      in = &cache.block_output(i);
    }
    const auto& last = geometry_.back().out;
    const int lp = last.plane();
    cache.pooled.resize(last.channels, batch);
    for (int c = 0; c < last.channels; ++c) {
      for (int b = 0; b < batch; ++b) {
        cache.pooled(c, b) = (*in).row(c).segment(static_cast<Eigen::Index>(b) * lp, lp).sum() / static_cast<T>(lp);
      }
    }
    cache.logits.noalias() = head_weight_ * cache.pooled;
    cache.logits.colwise() += head_bias_;
  }

  /// Backpropagate dlogits (M x B). Accumulates parameter gradients into
  /// `grads` when given; copies d/d(activation of `record_block`) into
  /// `record` when given. Stops as early as the requested outputs allow.
  void backward(const Cache& cache, const Mat<T>& dlogits, Grads* grads, int record_block, Mat<T>* record) const {
    const int batch = cache.batch;
    if (grads) {
      grads->head_weight.noalias() += dlogits * cache.pooled.transpose();
      grads->head_bias += dlogits.rowwise().sum();
    }
    const Mat<T> dpooled = head_weight_.transpose() * dlogits;
    const auto& last = geometry_.back().out;
    const int lp = last.plane();
    Mat<T> dout(last.channels, static_cast<Eigen::Index>(batch) * lp);
    for (int c = 0; c < last.channels; ++c) {
      for (int b = 0; b < batch; ++b) {
        dout.row(c).segment(static_cast<Eigen::Index>(b) * lp, lp).setConstant(dpooled(c, b) / static_cast<T>(lp));
      }
    }
    const int stop = grads ? 0 : std::max(record_block, 0);
    Mat<T> dact;
    Mat<T> dcol;
    for (int i = static_cast<int>(geometry_.size()) - 1; i >= stop; --i) {
      const auto& g = geometry_[static_cast<std::size_t>(i)];
      const auto& bc = cache.blocks[static_cast<std::size_t>(i)];
      if (g.pool) {
        dact.setZero(g.act.channels, static_cast<Eigen::Index>(batch) * g.act.plane());
        for (Eigen::Index c = 0; c < dout.rows(); ++c) {
          for (Eigen::Index j = 0; j < dout.cols(); ++j) {
            dact(c, bc.argmax[static_cast<std::size_t>(c * dout.cols() + j)]) += dout(c, j);
          }
        }
      } else {
        dact = std::move(dout);
      }
      if (record && i == record_block) *record = dact;
      if (!grads && i == stop) break;
      // ReLU: gradient passes only where the activation is positive.
      dact = (bc.act.array() > T(0)).select(dact, T(0));
      if (grads) {
        grads->weight[static_cast<std::size_t>(i)].noalias() += dact * bc.col.transpose();
        grads->bias[static_cast<std::size_t>(i)] += dact.rowwise().sum();
      }
      if (i == 0) break;
      dcol.noalias() = weight_[static_cast<std::size_t>(i)].transpose() * dact;
      col2im(dcol, g, batch, dout);
    }
  }

  Grads zero_grads() const {
    Grads g;
    for (std::size_t i = 0; i < weight_.size(); ++i) {
      g.weight.push_back(Mat<T>::Zero(weight_[i].rows(), weight_[i].cols()));
      g.bias.push_back(Vec<T>::Zero(bias_[i].size()));
    }
    g.head_weight = Mat<T>::Zero(head_weight_.rows(), head_weight_.cols());
    g.head_bias = Vec<T>::Zero(head_bias_.size());
    return g;
  }

 private:
  static void im2col(const Mat<T>& in, const Geometry& g, int batch, Mat<T>& col) {
    const int ip = g.in.plane();
    const int op = g.act.plane();
    col.resize(static_cast<Eigen::Index>(g.in.channels) * 9, static_cast<Eigen::Index>(batch) * op);
    for (int ci = 0; ci < g.in.channels; ++ci) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          T* row = col.row(ci * 9 + ky * 3 + kx).data();
          const T* src = in.row(ci).data();
          for (int b = 0; b < batch; ++b) {
            const T* plane = src + static_cast<std::ptrdiff_t>(b) * ip;
            T* dst = row + static_cast<std::ptrdiff_t>(b) * op;
            for (int oy = 0; oy < g.act.height; ++oy) {
              const int iy = oy * g.stride + ky - 1;
              T* d = dst + oy * g.act.width;
              if (iy < 0 || iy >= g.in.height) {
                std::fill(d, d + g.act.width, T(0));
                continue;
              }
              const T* s = plane + iy * g.in.width;
              for (int ox = 0; ox < g.act.width; ++ox) {
                const int ix = ox * g.stride + kx - 1;
                d[ox] = (ix < 0 || ix >= g.in.width) ? T(0) : s[ix];
              }
            }
          }
        }
      }
    }
  }

  static void col2im(const Mat<T>& col, const Geometry& g, int batch, Mat<T>& out) {
    const int ip = g.in.plane();
    const int op = g.act.plane();
    out.setZero(g.in.channels, static_cast<Eigen::Index>(batch) * ip);
    for (int ci = 0; ci < g.in.channels; ++ci) {
      T* dst_row = out.row(ci).data();
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const T* row = col.row(ci * 9 + ky * 3 + kx).data();
          for (int b = 0; b < batch; ++b) {
            T* plane = dst_row + static_cast<std::ptrdiff_t>(b) * ip;
            const T* src = row + static_cast<std::ptrdiff_t>(b) * op;
            for (int oy = 0; oy < g.act.height; ++oy) {
              const int iy = oy * g.stride + ky - 1;
              if (iy < 0 || iy >= g.in.height) continue;
              T* d = plane + iy * g.in.width;
              const T* s = src + oy * g.act.width;
              for (int ox = 0; ox < g.act.width; ++ox) {
                const int ix = ox * g.stride + kx - 1;
                if (ix >= 0 && ix < g.in.width) d[ix] += s[ox];
              }
            }
          }
        }
      }
    }
  }

  static void max_pool(const Mat<T>& act, const Geometry& g, int batch, Mat<T>& out, std::vector<int>& argmax) {
    const int ap = g.act.plane();
    const int op = g.out.plane();
    out.resize(g.act.channels, static_cast<Eigen::Index>(batch) * op);
    argmax.resize(static_cast<std::size_t>(out.size()));
    for (int c = 0; c < g.act.channels; ++c) {
      const T* src = act.row(c).data();
      for (int b = 0; b < batch; ++b) {
        for (int oy = 0; oy < g.out.height; ++oy) {
          for (int ox = 0; ox < g.out.width; ++ox) {
            int best = b * ap + (2 * oy) * g.act.width + 2 * ox;
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const int idx = b * ap + (2 * oy + dy) * g.act.width + 2 * ox + dx;
                if (src[idx] > src[best]) best = idx;
              }
            }
            const int o = b * op + oy * g.out.width + ox;
            out(c, o) = src[best];
            argmax[static_cast<std::size_t>(c) * static_cast<std::size_t>(out.cols()) + static_cast<std::size_t>(o)] = best;
          }
        }
      }
    }
  }

  ModelConfig config_;
  std::vector<Geometry> geometry_;
  std::vector<Mat<T>> weight_;
  std::vector<Vec<T>> bias_;
  Mat<T> head_weight_;
  Vec<T> head_bias_;
};

void check_objective(const ModelState& state, std::size_t objective) {
  if (objective >= static_cast<std::size_t>(state.config.objectives)) {
    throw std::out_of_range("objective " + std::to_string(objective) + " out of range (model has " +
                            std::to_string(state.config.objectives) + ")");
  }
}

template <typename T>
std::vector<std::vector<double>> to_rows(const Mat<T>& logits) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(logits.cols()),
                                       std::vector<double>(static_cast<std::size_t>(logits.rows())));
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    for (Eigen::Index m = 0; m < logits.rows(); ++m) out[static_cast<std::size_t>(b)][static_cast<std::size_t>(m)] = logits(m, b);
  }
  return out;
}

template <typename T>
std::vector<std::vector<double>> logits_impl(const ModelState& state, std::span<const Image* const> images) {
  Network<T> net(state);
  typename Network<T>::Cache cache;
  net.forward(images, cache);
  return to_rows(cache.logits);
}

void check_targets(const ModelState& state, std::span<const Image* const> images,
                   std::span<const std::vector<int>* const> targets, const ObjectiveWeights& weights) {
  if (images.size() != targets.size()) throw ShapeError("batch: images and targets differ in count");
  if (weights.size() != static_cast<std::size_t>(state.config.objectives)) {
    throw ShapeError("batch: weights do not match the objective count");
  }
  for (const auto* t : targets) {
    if (t->size() != weights.size()) throw ShapeError("batch: target vector length does not match the objective count");
  }
}

double sample_loss(const std::vector<double>& logits, const std::vector<int>& targets, const ObjectiveWeights& weights) {
  std::vector<double> probs(logits.size());
  for (std::size_t m = 0; m < logits.size(); ++m) probs[m] = sigmoid(logits[m]);
  return weighted_bce(probs, targets, weights);
}

template <typename T>
LossGradient loss_gradient_impl(const ModelState& state, std::span<const Image* const> images,
                                std::span<const std::vector<int>* const> targets, const ObjectiveWeights& weights) {
  check_targets(state, images, targets, weights);
  LossGradient out;
  out.gradients.reserve(state.params.size());
  if (images.empty()) {
    for (const auto& p : state.params) out.gradients.emplace_back(p.values.size(), 0.0);
    return out;
  }
  Network<T> net(state);
  typename Network<T>::Cache cache;
  net.forward(images, cache);
  const auto batch = static_cast<Eigen::Index>(images.size());
  const auto m = cache.logits.rows();
  Mat<T> dlogits(m, batch);
  double loss = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& t = *targets[static_cast<std::size_t>(b)];
    std::vector<double> z(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) z[static_cast<std::size_t>(i)] = static_cast<double>(cache.logits(i, b));
    loss += sample_loss(z, t, weights);
    for (Eigen::Index i = 0; i < m; ++i) {
      // Fused sigmoid + BCE: dJ/dz = w (f - t); zero where the clamp is active.
      const double f = sigmoid(z[static_cast<std::size_t>(i)]);
      const auto ti = t[static_cast<std::size_t>(i)];
      const bool clamped = f < kBceEpsilon || f > 1.0 - kBceEpsilon;
      const double g = clamped ? 0.0 : weights[static_cast<std::size_t>(i)].for_target(ti) * (f - ti);
      dlogits(i, b) = static_cast<T>(g / static_cast<double>(batch));
    }
  }
  out.loss = loss / static_cast<double>(batch);

  auto grads = net.zero_grads();
  net.backward(cache, dlogits, &grads, -1, nullptr);
  auto flatten = [](const auto& m) {
    std::vector<double> v(static_cast<std::size_t>(m.size()));
    for (Eigen::Index k = 0; k < m.size(); ++k) v[static_cast<std::size_t>(k)] = static_cast<double>(m.data()[k]);
    return v;
  };
  for (std::size_t i = 0; i < grads.weight.size(); ++i) {
    out.gradients.push_back(flatten(grads.weight[i]));
    out.gradients.push_back(flatten(grads.bias[i]));
  }
  out.gradients.push_back(flatten(grads.head_weight));
  out.gradients.push_back(flatten(grads.head_bias));
  return out;
}

}  // namespace

std::vector<std::vector<double>> batch_logits(const ModelState& state, std::span<const Image* const> images,
                                              Precision precision) {
  if (images.empty()) return {};
  return precision == Precision::Single ? logits_impl<float>(state, images) : logits_impl<double>(state, images);
}

std::vector<double> forward_logits(const ModelState& state, const Image& image) {
  const Image* one[] = {&image};
  return logits_impl<double>(state, one).front();
}

std::vector<double> forward(const ModelState& state, const Image& image) {
  auto z = forward_logits(state, image);
  for (auto& v : z) v = sigmoid(v);
  return z;
}

RecordedForward forward_with_record(const ModelState& state, const Image& image, std::string_view layer,
                                    std::size_t objective) {
  const int block = state.config.layer_index(layer);
  if (block < 0) throw std::out_of_range("unknown layer '" + std::string(layer) + "'");
  check_objective(state, objective);

  Network<double> net(state);
  Network<double>::Cache cache;
  const Image* one[] = {&image};
  net.forward(one, cache);

  Mat<double> dlogits = Mat<double>::Zero(state.config.objectives, 1);
  dlogits(static_cast<Eigen::Index>(objective), 0) = 1.0;
  Mat<double> g;
  net.backward(cache, dlogits, nullptr, block, &g);

  RecordedForward out;
  out.logits = to_rows(cache.logits).front();
  for (double z : out.logits) out.probabilities.push_back(sigmoid(z));
  const auto& act = cache.blocks[static_cast<std::size_t>(block)].act;
  out.record.shape = net.geometry(static_cast<std::size_t>(block)).act;
  out.record.activations.assign(act.data(), act.data() + act.size());
  out.record.gradients.assign(g.data(), g.data() + g.size());
  return out;
}

LossGradient loss_and_gradient(const ModelState& state, std::span<const Image* const> images,
                               std::span<const std::vector<int>* const> targets, const ObjectiveWeights& weights,
                               Precision precision) {
  return precision == Precision::Single ? loss_gradient_impl<float>(state, images, targets, weights)
                                        : loss_gradient_impl<double>(state, images, targets, weights);
}

double batch_loss(const ModelState& state, std::span<const Image* const> images,
                  std::span<const std::vector<int>* const> targets, const ObjectiveWeights& weights,
                  Precision precision) {
  check_targets(state, images, targets, weights);
  if (images.empty()) return 0.0;
  const auto logits = batch_logits(state, images, precision);
  double total = 0.0;
  for (std::size_t b = 0; b < logits.size(); ++b) total += sample_loss(logits[b], *targets[b], weights);
  return total / static_cast<double>(logits.size());
}

}  // namespace camalign
