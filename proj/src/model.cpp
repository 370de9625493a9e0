#include "conn/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace conn::model {

void HyperParams::validate() const {
  if (dim < 1) throw ModelError("dim must be >= 1");
  if (unroll < 1) throw ModelError("unroll must be >= 1");
  if (depth_z < 1 || depth_z > 2) throw ModelError("depth_z must be 1 or 2");
  if (depth_theta < 1 || depth_theta > 3) throw ModelError("depth_theta must be 1, 2 or 3");
  for (double p : {dropout_word, dropout_z, dropout_theta})
    if (!(p >= 0.0 && p < 1.0)) throw ModelError("dropout probabilities must lie in [0, 1)");
  if (num_classes < 2) throw ModelError("num_classes must be >= 2");
}

// ---------------------------------------------------------------------------
// ParamArrays

void ParamArrays::for_each_array(
    const std::function<void(std::string_view, double*, std::size_t, std::size_t)>& f) {
  auto visit = [&f](const std::string& name, auto& m) {
    f(name, m.data(), static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  };
  visit("embedding", embedding);
  for (std::size_t l = 0; l < z_layers.size(); ++l) visit("z_layer" + std::to_string(l), z_layers[l]);
  visit("feedback", feedback);
  for (std::size_t l = 0; l < theta_layers.size(); ++l)
    visit("theta_layer" + std::to_string(l), theta_layers[l]);
  visit("head_weight", head_weight);
  visit("head_bias", head_bias);
}

void ParamArrays::for_each_array(
    const std::function<void(std::string_view, const double*, std::size_t, std::size_t)>& f) const {
  const_cast<ParamArrays*>(this)->for_each_array(
      [&f](std::string_view name, double* data, std::size_t r, std::size_t c) { f(name, data, r, c); });
}

std::size_t ParamArrays::num_values() const {
  std::size_t n = 0;
  for_each_array([&n](std::string_view, const double*, std::size_t r, std::size_t c) { n += r * c; });
  return n;
}

bool ParamArrays::all_finite() const {
  bool ok = true;
  for_each_array([&ok](std::string_view, const double* d, std::size_t r, std::size_t c) {
    for (std::size_t i = 0; i < r * c; ++i) ok = ok && std::isfinite(d[i]);
  });
  return ok;
}

bool ParamArrays::same_shape(const ParamArrays& other) const {
  std::vector<std::pair<std::size_t, std::size_t>> a, b;
  for_each_array([&a](std::string_view, const double*, std::size_t r, std::size_t c) { a.emplace_back(r, c); });
  other.for_each_array(
      [&b](std::string_view, const double*, std::size_t r, std::size_t c) { b.emplace_back(r, c); });
  return a == b;
}

void ParamArrays::set_zero() {
  for_each_array([](std::string_view, double* d, std::size_t r, std::size_t c) {
    std::fill(d, d + r * c, 0.0);
  });
}

ModelParams ModelParams::zeros(const HyperParams& hp, std::size_t vocab_size) {
  hp.validate();
  const auto D = static_cast<Eigen::Index>(hp.dim);
  ModelParams p;
  p.embedding = Mat::Zero(static_cast<Eigen::Index>(vocab_size), D);
  p.z_layers.assign(hp.depth_z, Mat::Zero(D, D));
  p.feedback = Mat::Zero(D, D);
  p.theta_layers.assign(hp.depth_theta, Mat::Zero(D, D));
  p.head_weight = Mat::Zero(static_cast<Eigen::Index>(hp.head_outputs()), D);
  p.head_bias = Vec::Zero(static_cast<Eigen::Index>(hp.head_outputs()));
  return p;
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (!same_shape(other)) return false;
  std::vector<const double*> mine, theirs;
  std::vector<std::size_t> sizes;
  for_each_array([&](std::string_view, const double* d, std::size_t r, std::size_t c) {
    mine.push_back(d);
    sizes.push_back(r * c);
  });
  other.for_each_array([&](std::string_view, const double* d, std::size_t, std::size_t) { theirs.push_back(d); });
  for (std::size_t a = 0; a < mine.size(); ++a)
    if (sizes[a] && std::memcmp(mine[a], theirs[a], sizes[a] * sizeof(double)) != 0) return false;
  return true;
}

ModelParams init_params(const HyperParams& hp, std::size_t vocab_size, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(hp, vocab_size);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hp.dim));
  p.for_each_array([&](std::string_view name, double* d, std::size_t r, std::size_t c) {
    if (name == "head_bias") return;
    for (std::size_t i = 0; i < r * c; ++i) d[i] = rng.uniform(-bound, bound);
  });
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass

Vec normalize(const Vec& v) {
  const double n = v.norm();
  // NaN must not hide behind the zero guard
  if (n > kNormEpsilon || std::isnan(n)) return v / n;
  return Vec::Zero(v.size());
}

namespace {

Vec tanh_of(const Vec& v) {
  return v.unaryExpr([](double x) { return std::tanh(x); });
}

Vec sample_mask(std::size_t dim, double p, Rng& rng) {
  if (p == 0.0) return {};
  Vec m(static_cast<Eigen::Index>(dim));
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index d = 0; d < m.size(); ++d) m[d] = rng.bernoulli(p) ? 0.0 : keep_scale;
  return m;
}

Vec apply_mask(const std::vector<Vec>& masks, std::size_t i, const Vec& v) {
  if (i >= masks.size() || masks[i].size() == 0) return v;
  return masks[i].cwiseProduct(v);
}

}  // namespace

DropoutMasks identity_masks(const HyperParams& hp, std::size_t num_words) {
  DropoutMasks m;
  m.word.assign(num_words, Vec());
  m.z.assign(hp.unroll, std::vector<Vec>(num_words));
  m.theta.assign(hp.unroll, Vec());
  return m;
}

DropoutMasks sample_masks(const HyperParams& hp, std::size_t num_words, Rng& rng) {
  DropoutMasks m;
  m.word.reserve(num_words);
  for (std::size_t i = 0; i < num_words; ++i) m.word.push_back(sample_mask(hp.dim, hp.dropout_word, rng));
  m.z.resize(hp.unroll);
  m.theta.reserve(hp.unroll);
  for (std::size_t t = 0; t < hp.unroll; ++t) {
    m.z[t].reserve(num_words);
    for (std::size_t i = 0; i < num_words; ++i) m.z[t].push_back(sample_mask(hp.dim, hp.dropout_z, rng));
    m.theta.push_back(sample_mask(hp.dim, hp.dropout_theta, rng));
  }
  return m;
}

StackTrace run_stack(const std::vector<Mat>& layers, const Vec& input, const Vec* injected) {
  StackTrace trace;
  trace.pre.reserve(layers.size());
  trace.out.reserve(layers.size());
  const Vec* x = &input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Vec a = layers[l] * *x;
    if (l == 0 && injected != nullptr && injected->size() != 0) a += *injected;
    trace.out.push_back(tanh_of(a));
    trace.pre.push_back(std::move(a));
    x = &trace.out.back();
  }
  return trace;
}

namespace {

void check_finite(const Vec& v, std::size_t t, const char* stage, std::ptrdiff_t word) {
  if (v.allFinite()) return;
  std::string msg = "non-finite activation in " + std::string(stage) + " at iteration " +
                    std::to_string(t + 1);
  if (word >= 0) msg += ", word index " + std::to_string(word);
  throw ModelError(msg);
}

}  // namespace

EmbeddingState forward_with_masks(const Document& doc, const ModelParams& p, const HyperParams& hp,
                                  const DropoutMasks& masks, Mode mode) {
  if (doc.word_ids.empty()) throw ModelError("forward: empty document");
  const std::size_t N = doc.size();
  const auto D = static_cast<Eigen::Index>(hp.dim);
  if (p.embedding.cols() != D || p.z_layers.size() != hp.depth_z ||
      p.theta_layers.size() != hp.depth_theta)
    throw ModelError("forward: parameters do not match hyperparameters");
  if (masks.word.size() != N || masks.z.size() != hp.unroll || masks.theta.size() != hp.unroll)
    throw ModelError("forward: dropout masks do not match document/unroll");

  EmbeddingState s;
  s.mode = mode;
  s.word_ids = doc.word_ids;
  s.masks = masks;
  s.word_inputs.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    const auto w = doc.word_ids[i];
    if (w >= p.vocab_size()) throw ModelError("forward: word id out of range");
    s.word_inputs.push_back(apply_mask(masks.word, i, p.embedding.row(w).transpose()));
  }

  s.iterations.resize(hp.unroll);
  for (std::size_t t = 0; t < hp.unroll; ++t) {
    IterationState& it = s.iterations[t];
    it.feedback_in = t == 0 ? Vec::Zero(D) : s.iterations[t - 1].mu_theta_masked;
    it.feedback_term = p.feedback * it.feedback_in;

    it.z.reserve(N);
    it.mu_z.reserve(N);
    it.z_sum = Vec::Zero(D);
    for (std::size_t i = 0; i < N; ++i) {
      it.z.push_back(run_stack(p.z_layers, s.word_inputs[i], &it.feedback_term));
      it.mu_z.push_back(normalize(it.z.back().last()));
      check_finite(it.mu_z.back(), t, "word network", static_cast<std::ptrdiff_t>(i));
      it.z_sum += apply_mask(masks.z[t], i, it.mu_z.back());
    }

    it.theta = run_stack(p.theta_layers, it.z_sum);
    it.mu_theta = normalize(it.theta.last());
    check_finite(it.mu_theta, t, "document network", -1);
    it.mu_theta_masked = apply_mask(masks.theta, t, it.mu_theta);
  }
  return s;
}

EmbeddingState forward(const Document& doc, const ModelParams& p, const HyperParams& hp, Mode mode,
                       Rng* rng) {
  if (mode == Mode::Eval) return forward_with_masks(doc, p, hp, identity_masks(hp, doc.size()), mode);
  if (rng == nullptr) throw ModelError("forward: train mode needs a random source");
  return forward_with_masks(doc, p, hp, sample_masks(hp, doc.size(), *rng), mode);
}

Vec embed(const Document& doc, const ModelParams& p, const HyperParams& hp) {
  return forward(doc, p, hp, Mode::Eval).embedding();
}

Vec classify(const Vec& mu_theta, const ModelParams& p) {
  return p.head_weight * mu_theta + p.head_bias;
}

Vec probabilities(const Vec& logits) {
  if (logits.size() == 1) {
    const double x = logits[0];
    const double p1 = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    Vec out(2);
    out << 1.0 - p1, p1;
    return out;
  }
  const double mx = logits.maxCoeff();
  Vec e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

int predict(const Vec& logits) {
  if (logits.size() == 1) return logits[0] > 0.0 ? 1 : 0;
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[best]) best = c;
  return static_cast<int>(best);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'C', 'O', 'N', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = std::bit_cast<U>(value);
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof buf);
}

template <typename T>
T get_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof buf)) throw ModelError("checkpoint truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const auto& hp = ckpt.hp;
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kVersion);
  for (std::uint64_t v : {static_cast<std::uint64_t>(ckpt.params.vocab_size()),
                          static_cast<std::uint64_t>(hp.dim), static_cast<std::uint64_t>(hp.unroll),
                          static_cast<std::uint64_t>(hp.depth_z), static_cast<std::uint64_t>(hp.depth_theta),
                          static_cast<std::uint64_t>(hp.num_classes)})
    put_le<std::uint64_t>(out, v);
  put_le<double>(out, hp.dropout_word);
  put_le<double>(out, hp.dropout_z);
  put_le<double>(out, hp.dropout_theta);
  put_le<std::uint64_t>(out, ckpt.label_hash);
  std::uint64_t count = 0;
  ckpt.params.for_each_array([&count](std::string_view, const double*, std::size_t, std::size_t) { ++count; });
  put_le<std::uint64_t>(out, count);
  ckpt.params.for_each_array([&out](std::string_view, const double* d, std::size_t r, std::size_t c) {
    put_le<std::uint64_t>(out, r);
    put_le<std::uint64_t>(out, c);
    for (std::size_t i = 0; i < r * c; ++i) put_le<double>(out, d[i]);
  });
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write checkpoint " + path.string());
  write_checkpoint(out, ckpt);
  if (!out) throw ModelError("write failed: " + path.string());
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw ModelError("not a checkpoint file");
  if (get_le<std::uint32_t>(in) != kVersion) throw ModelError("unsupported checkpoint version");
  Checkpoint ckpt;
  const auto V = get_le<std::uint64_t>(in);
  ckpt.hp.dim = get_le<std::uint64_t>(in);
  ckpt.hp.unroll = get_le<std::uint64_t>(in);
  ckpt.hp.depth_z = get_le<std::uint64_t>(in);
  ckpt.hp.depth_theta = get_le<std::uint64_t>(in);
  ckpt.hp.num_classes = get_le<std::uint64_t>(in);
  ckpt.hp.dropout_word = get_le<double>(in);
  ckpt.hp.dropout_z = get_le<double>(in);
  ckpt.hp.dropout_theta = get_le<double>(in);
  ckpt.label_hash = get_le<std::uint64_t>(in);
  ckpt.hp.validate();
  ckpt.params = ModelParams::zeros(ckpt.hp, V);
  std::uint64_t expected = 0;
  ckpt.params.for_each_array([&expected](std::string_view, const double*, std::size_t, std::size_t) { ++expected; });
  if (get_le<std::uint64_t>(in) != expected) throw ModelError("checkpoint array count mismatch");
  ckpt.params.for_each_array([&in](std::string_view name, double* d, std::size_t r, std::size_t c) {
    if (get_le<std::uint64_t>(in) != r || get_le<std::uint64_t>(in) != c)
      throw ModelError("checkpoint shape mismatch in " + std::string(name));
    for (std::size_t i = 0; i < r * c; ++i) d[i] = get_le<double>(in);
  });
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot read checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace conn::model
