#include "uca/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>

#include "uca/digest.hpp"
#include "uca/error.hpp"
#include "uca/random.hpp"
#include "uca/simd/kernels.hpp"
#include "uca/text.hpp"

namespace uca {

namespace {

constexpr double kLnEps = 1e-5;
constexpr char kMagic[8] = {'U', 'C', 'A', 'S', 'U', 'R', 'R', '\0'};

struct SurrogateTape final : Victim::Tape {
  std::vector<Matrix> h;                  // per block: LayerNorm output
  std::vector<std::vector<double>> rstd;  // per block
  std::vector<Matrix> u;                  // per block: tanh activation
  Matrix enc;
  std::vector<double> enc_rstd;
};

// Row-wise LayerNorm without affine parameters.
void layer_norm(const Matrix& x, Matrix& y, std::vector<double>& rstd) {
  const int n = x.rows(), d = x.cols();
  y = Matrix(n, d);
  rstd.assign(static_cast<std::size_t>(n), 0.0);
  for (int r = 0; r < n; ++r) {
    const double* xr = x.row(r);
    double mean = 0.0;
    for (int c = 0; c < d; ++c) mean += xr[c];
    mean /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= d;
    const double s = 1.0 / std::sqrt(var + kLnEps);
    rstd[static_cast<std::size_t>(r)] = s;
    double* yr = y.row(r);
    for (int c = 0; c < d; ++c) yr[c] = (xr[c] - mean) * s;
  }
}

// dx = rstd * (dy - mean(dy) - y * mean(dy * y)), accumulated into gx.
void layer_norm_backward(const Matrix& y, const std::vector<double>& rstd, const Matrix& gy, Matrix& gx) {
  const int n = y.rows(), d = y.cols();
  for (int r = 0; r < n; ++r) {
    const double* yr = y.row(r);
    const double* gr = gy.row(r);
    double m1 = 0.0, m2 = 0.0;
    for (int c = 0; c < d; ++c) {
      m1 += gr[c];
      m2 += gr[c] * yr[c];
    }
    m1 /= d;
    m2 /= d;
    const double s = rstd[static_cast<std::size_t>(r)];
    double* out = gx.row(r);
    for (int c = 0; c < d; ++c) out[c] += s * (gr[c] - m1 - yr[c] * m2);
  }
}

Matrix random_normal(Rng& rng, int rows, int cols, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * standard_normal(rng);
  return m;
}

// Anchor grid for the pooling projector: the most square factorisation
// rows = a * b with a <= b.
std::pair<int, int> anchor_grid(int rows) {
  int a = static_cast<int>(std::sqrt(static_cast<double>(rows)));
  while (a > 1 && rows % a != 0) --a;
  return {a, rows / a};
}

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("surrogate checkpoint is truncated");
  return v;
}

}  // namespace

const std::vector<std::string>& surrogate_answers(Scenario scenario) {
  static const std::vector<std::string> planning = {"go straight", "slow down", "stop", "turn left",
                                                    "turn right"};
  static const std::vector<std::string> prediction = {
      "the car ahead will keep moving", "the car ahead will stop", "the car ahead will turn left",
      "the car ahead will turn right", "the car ahead will reverse"};
  static const std::vector<std::string> perception = {"a car is ahead", "the road is clear",
                                                      "a truck is ahead", "a pedestrian is crossing",
                                                      "an obstacle blocks the lane"};
  switch (scenario) {
    case Scenario::Planning: return planning;
    case Scenario::Prediction: return prediction;
    case Scenario::Perception: return perception;
  }
  return planning;
}

Scenario route_prompt(std::string_view prompt) {
  static const std::map<std::string, Scenario> keywords = {
      {"should", Scenario::Planning},      {"plan", Scenario::Planning},
      {"action", Scenario::Planning},      {"maneuver", Scenario::Planning},
      {"manoeuvre", Scenario::Planning},   {"ego", Scenario::Planning},
      {"safest", Scenario::Planning},      {"drive", Scenario::Planning},
      {"predict", Scenario::Prediction},   {"will", Scenario::Prediction},
      {"future", Scenario::Prediction},    {"next", Scenario::Prediction},
      {"intend", Scenario::Prediction},    {"intention", Scenario::Prediction},
      {"going", Scenario::Prediction},     {"trajectory", Scenario::Prediction},
      {"see", Scenario::Perception},       {"visible", Scenario::Perception},
      {"describe", Scenario::Perception},  {"detect", Scenario::Perception},
      {"perceive", Scenario::Perception},  {"objects", Scenario::Perception},
      {"identify", Scenario::Perception},  {"front", Scenario::Perception},
  };
  int hits[3] = {0, 0, 0};
  for (const auto& tok : tokenize(prompt)) {
    const auto it = keywords.find(tok);
    if (it != keywords.end()) ++hits[static_cast<int>(it->second)];
  }
  // Ties go to the earlier scenario.
  int best = 0;
  for (int s = 1; s < 3; ++s)
    if (hits[s] > hits[best]) best = s;
  return static_cast<Scenario>(best);
}

// ---------------------------------------------------------------------------

SurrogateVictim::SurrogateVictim(const SurrogateConfig& config)
    : SurrogateVictim(config, init_weights(config)) {}

SurrogateVictim::SurrogateVictim(const SurrogateConfig& config, Weights weights)
    : config_(config), w_(std::move(weights)) {
  finish_spec();
}

void SurrogateVictim::finish_spec() {
  const auto& c = config_;
  if (c.input_size <= 0 || c.patch <= 0 || c.input_size % c.patch != 0)
    throw ConfigError("surrogate input_size must be a positive multiple of patch");
  spec_.name = "surrogate";
  spec_.attack_layers = {"encoder", "projector"};
  spec_.input_height = c.input_size;
  spec_.input_width = c.input_size;
  spec_.prompt_template = "<image>\n{prompt}";

  const int g = c.grid();
  neighbours_.assign(static_cast<std::size_t>(c.tokens()), {});
  neighbour_norm_.assign(static_cast<std::size_t>(c.tokens()), 0.0);
  for (int ty = 0; ty < g; ++ty) {
    for (int tx = 0; tx < g; ++tx) {
      const int t = ty * g + tx;
      auto& nb = neighbours_[static_cast<std::size_t>(t)];
      int k = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int y = ty + dy, x = tx + dx;
          nb[static_cast<std::size_t>(dy * 3 + dx + 4)] = (y >= 0 && y < g && x >= 0 && x < g) ? y * g + x : -1;
          k += (y >= 0 && y < g && x >= 0 && x < g);
        }
      }
      neighbour_norm_[static_cast<std::size_t>(t)] = 1.0 / k;
    }
  }
}

SurrogateVictim::Weights SurrogateVictim::init_weights(const SurrogateConfig& c) {
  if (c.input_size <= 0 || c.patch <= 0 || c.input_size % c.patch != 0)
    throw ConfigError("surrogate input_size must be a positive multiple of patch");
  Rng rng(c.seed);
  Weights w;
  const int P = c.patch, pd = c.patch_dim(), D = c.embed_dim, H = c.hidden_dim, T = c.tokens();

  // Patch filters: low-frequency separable cosine basis with random channel
  // mixing, plus a white component.
  w.patch_embed = Matrix(pd, D);
  const int F = std::max(1, c.filter_freqs);
  for (int d = 0; d < D; ++d) {
    std::vector<double> coef(static_cast<std::size_t>(F * F * 3));
    for (double& v : coef) v = standard_normal(rng);
    std::vector<double> col(static_cast<std::size_t>(pd), 0.0);
    for (int py = 0; py < P; ++py) {
      for (int px = 0; px < P; ++px) {
        for (int fy = 0; fy < F; ++fy) {
          const double by = std::cos(std::numbers::pi * (py + 0.5) * fy / P);
          for (int fx = 0; fx < F; ++fx) {
            const double b = by * std::cos(std::numbers::pi * (px + 0.5) * fx / P);
            for (int ch = 0; ch < 3; ++ch)
              col[static_cast<std::size_t>((py * P + px) * 3 + ch)] +=
                  b * coef[static_cast<std::size_t>((fy * F + fx) * 3 + ch)];
          }
        }
      }
    }
    double n2 = 0.0;
    for (double v : col) n2 += v * v;
    const double smooth_scale = 1.0 / std::sqrt(std::max(n2, 1e-12));
    for (int i = 0; i < pd; ++i) {
      const double white = c.filter_noise * standard_normal(rng) / std::sqrt(static_cast<double>(pd));
      w.patch_embed(i, d) = col[static_cast<std::size_t>(i)] * smooth_scale + white;
    }
  }
  w.embed_bias = random_normal(rng, 1, D, 0.05);
  w.position = random_normal(rng, T, D, 0.1);
  for (int b = 0; b < c.blocks; ++b) {
    w.w1.push_back(random_normal(rng, D, H, 1.0 / std::sqrt(static_cast<double>(D))));
    w.b1.push_back(random_normal(rng, 1, H, 0.1));
    w.w2.push_back(random_normal(rng, H, D, 0.5 / std::sqrt(static_cast<double>(H))));
  }

  // Gaussian spatial pooling onto an anchor grid.
  const int g = c.grid();
  const auto [ar, ac] = anchor_grid(c.proj_rows);
  w.pool = Matrix(c.proj_rows, T);
  const double sigma = 0.5 * std::max(static_cast<double>(g) / ar, static_cast<double>(g) / ac);
  for (int i = 0; i < ar; ++i) {
    for (int j = 0; j < ac; ++j) {
      const int r = i * ac + j;
      const double ay = (i + 0.5) * g / ar - 0.5, ax = (j + 0.5) * g / ac - 0.5;
      double total = 0.0;
      for (int t = 0; t < T; ++t) {
        const double dy = t / g - ay, dx = t % g - ax;
        const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        w.pool(r, t) = v;
        total += v;
      }
      for (int t = 0; t < T; ++t) w.pool(r, t) /= total;
    }
  }
  w.proj = random_normal(rng, D, c.proj_dim, 1.0 / std::sqrt(static_cast<double>(D)));
  w.proj_bias = random_normal(rng, 1, c.proj_dim, 0.05);
  for (auto& proto : w.prototypes) {
    proto = random_normal(rng, 5, c.proj_dim, 1.0);
    for (int k = 0; k < 5; ++k) {
      const double n = std::sqrt(simd::dot(proto.row(k), proto.row(k), static_cast<std::size_t>(c.proj_dim)));
      for (int j = 0; j < c.proj_dim; ++j) proto(k, j) /= n;
    }
  }
  w.text_embed = random_normal(rng, c.text_buckets, c.proj_dim, c.text_scale);

  // The head looks mostly at the middle of the frame, where the road ahead is.
  w.head_pool = Matrix(1, c.proj_rows);
  {
    double total = 0.0;
    for (int i = 0; i < ar; ++i)
      for (int j = 0; j < ac; ++j) {
        const double dy = (i + 0.5) / ar - 0.5, dx = (j + 0.5) / ac - 0.5;
        const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * c.head_focus * c.head_focus));
        w.head_pool(0, i * ac + j) = v;
        total += v;
      }
    for (double& v : w.head_pool.values()) v /= total;
  }

  // Head centre: a blend of the response to a blank grey frame and to
  // schematic road scenes (sky band, grey ground, a light box ahead at
  // several sizes). head_blend = 0 centres on the blank frame (answers barely
  // move), 1 on the street prior (answers flip on any paint change).
  w.head_center = Matrix(1, c.proj_dim);
  SurrogateVictim probe(c, w);
  const int n = c.input_size;
  auto head_mean = [&](const Image& frame, double weight) {
    const FeatureStack fs = probe.forward(frame, nullptr);
    const Matrix& pr = fs.layer("projector");
    for (int r = 0; r < pr.rows(); ++r)
      for (int j = 0; j < pr.cols(); ++j) w.head_center(0, j) += weight * w.head_pool(0, r) * pr(r, j);
  };
  head_mean(Image(n, n, 3, 0.5), 1.0 - c.head_blend);
  const double box_sizes[] = {0.15, 0.3, 0.45, 0.6};
  for (double box : box_sizes) {
    Image frame(n, n, 3);
    for (int r = 0; r < n; ++r) {
      const double y = (r + 0.5) / n;
      for (int x = 0; x < n; ++x) {
        const double u = (x + 0.5) / n;
        double rgb[3];
        if (y < 0.35) {
          rgb[0] = 0.55 + 0.3 * y; rgb[1] = 0.7 + 0.3 * y; rgb[2] = 0.9;
        } else {
          rgb[0] = rgb[1] = rgb[2] = 0.38;
        }
        if (std::abs(u - 0.5) < 0.5 * box && std::abs(y - 0.5) < 0.3 * box) rgb[0] = rgb[1] = rgb[2] = 0.5;
        for (int ch = 0; ch < 3; ++ch) frame.at(r, x, ch) = rgb[ch];
      }
    }
    head_mean(frame, c.head_blend / static_cast<double>(std::size(box_sizes)));
  }
  return w;
}

FeatureStack SurrogateVictim::forward(const Image& input, std::unique_ptr<Tape>* tape) const {
  const auto& c = config_;
  if (input.height() != c.input_size || input.width() != c.input_size || input.channels() != 3)
    throw ShapeMismatch("surrogate expects a " + std::to_string(c.input_size) + "x" +
                        std::to_string(c.input_size) + "x3 input");
  const int P = c.patch, pd = c.patch_dim(), D = c.embed_dim, H = c.hidden_dim, T = c.tokens(), g = c.grid();
  const auto uD = static_cast<std::size_t>(D), uH = static_cast<std::size_t>(H);

  Matrix patches(T, pd);
  for (int ty = 0; ty < g; ++ty)
    for (int tx = 0; tx < g; ++tx) {
      double* dst = patches.row(ty * g + tx);
      for (int py = 0; py < P; ++py) {
        const double* src = input.row_ptr(ty * P + py) + static_cast<std::size_t>(tx * P) * 3;
        for (int k = 0; k < P * 3; ++k) dst[py * P * 3 + k] = 2.0 * src[k] - 1.0;
      }
    }

  Matrix x = w_.position;
  for (int t = 0; t < T; ++t) simd::axpy(1.0, w_.embed_bias.data(), x.row(t), uD);
  simd::gemm_acc(patches.data(), w_.patch_embed.data(), x.data(), static_cast<std::size_t>(T),
                 static_cast<std::size_t>(pd), uD);

  auto st = tape ? std::make_unique<SurrogateTape>() : nullptr;
  Matrix h, m(T, D), a;
  std::vector<double> rstd;
  for (int b = 0; b < c.blocks; ++b) {
    layer_norm(x, h, rstd);
    std::fill(m.values().begin(), m.values().end(), 0.0);
    for (int t = 0; t < T; ++t) {
      const auto& nb = neighbours_[static_cast<std::size_t>(t)];
      const double s = neighbour_norm_[static_cast<std::size_t>(t)];
      for (int n : nb)
        if (n >= 0) simd::axpy(s, h.row(n), m.row(t), uD);
    }
    a = Matrix(T, H);
    for (int t = 0; t < T; ++t) std::copy_n(w_.b1[static_cast<std::size_t>(b)].data(), H, a.row(t));
    simd::gemm_acc(m.data(), w_.w1[static_cast<std::size_t>(b)].data(), a.data(), static_cast<std::size_t>(T), uD,
                   uH);
    for (double& v : a.values()) v = std::tanh(v);
    simd::gemm_acc(a.data(), w_.w2[static_cast<std::size_t>(b)].data(), x.data(), static_cast<std::size_t>(T), uH,
                   uD);
    if (st) {
      st->h.push_back(h);
      st->rstd.push_back(rstd);
      st->u.push_back(a);
    }
  }
  Matrix enc;
  layer_norm(x, enc, rstd);

  Matrix pooled(c.proj_rows, D);
  simd::gemm_acc(w_.pool.data(), enc.data(), pooled.data(), static_cast<std::size_t>(c.proj_rows),
                 static_cast<std::size_t>(T), uD);
  Matrix proj(c.proj_rows, c.proj_dim);
  for (int r = 0; r < c.proj_rows; ++r) std::copy_n(w_.proj_bias.data(), c.proj_dim, proj.row(r));
  simd::gemm_acc(pooled.data(), w_.proj.data(), proj.data(), static_cast<std::size_t>(c.proj_rows), uD,
                 static_cast<std::size_t>(c.proj_dim));

  FeatureStack fs;
  fs.layers.push_back({"encoder", enc});
  fs.layers.push_back({"projector", std::move(proj)});
  fs.provenance = "surrogate";
  if (st) {
    st->enc = std::move(enc);
    st->enc_rstd = std::move(rstd);
    *tape = std::move(st);
  }
  return fs;
}

Image SurrogateVictim::backward(const Tape& tape_base, const FeatureStack& grad) const {
  const auto* tape = dynamic_cast<const SurrogateTape*>(&tape_base);
  if (!tape) throw PreconditionError("tape was not produced by the surrogate victim");
  const auto& c = config_;
  const int P = c.patch, pd = c.patch_dim(), D = c.embed_dim, H = c.hidden_dim, T = c.tokens(), g = c.grid();
  const auto uD = static_cast<std::size_t>(D), uH = static_cast<std::size_t>(H), uT = static_cast<std::size_t>(T);

  Matrix g_enc(T, D);
  if (grad.has("encoder")) {
    const Matrix& ge = grad.layer("encoder");
    if (ge.rows() != T || ge.cols() != D) throw ShapeMismatch("encoder gradient has the wrong shape");
    g_enc = ge;
  }
  if (grad.has("projector")) {
    const Matrix& gp = grad.layer("projector");
    if (gp.rows() != c.proj_rows || gp.cols() != c.proj_dim)
      throw ShapeMismatch("projector gradient has the wrong shape");
    Matrix g_pooled(c.proj_rows, D);
    simd::gemm_nt_acc(gp.data(), w_.proj.data(), g_pooled.data(), static_cast<std::size_t>(c.proj_rows),
                      static_cast<std::size_t>(c.proj_dim), uD);
    simd::gemm_tn_acc(w_.pool.data(), g_pooled.data(), g_enc.data(), static_cast<std::size_t>(c.proj_rows), uT,
                      uD);
  }

  Matrix g_x(T, D);
  layer_norm_backward(tape->enc, tape->enc_rstd, g_enc, g_x);

  Matrix g_u, g_m(T, D), g_h(T, D);
  for (int b = c.blocks - 1; b >= 0; --b) {
    const auto ub = static_cast<std::size_t>(b);
    g_u = Matrix(T, H);
    simd::gemm_nt_acc(g_x.data(), w_.w2[ub].data(), g_u.data(), uT, uD, uH);
    const auto u = tape->u[ub].values();
    auto gu = g_u.values();
    for (std::size_t i = 0; i < gu.size(); ++i) gu[i] *= 1.0 - u[i] * u[i];
    std::fill(g_m.values().begin(), g_m.values().end(), 0.0);
    simd::gemm_nt_acc(g_u.data(), w_.w1[ub].data(), g_m.data(), uT, uH, uD);
    std::fill(g_h.values().begin(), g_h.values().end(), 0.0);
    for (int t = 0; t < T; ++t) {
      const auto& nb = neighbours_[static_cast<std::size_t>(t)];
      const double s = neighbour_norm_[static_cast<std::size_t>(t)];
      for (int n : nb)
        if (n >= 0) simd::axpy(s, g_m.row(t), g_h.row(n), uD);
    }
    layer_norm_backward(tape->h[ub], tape->rstd[ub], g_h, g_x);
  }

  Matrix g_patches(T, pd);
  simd::gemm_nt_acc(g_x.data(), w_.patch_embed.data(), g_patches.data(), uT, uD, static_cast<std::size_t>(pd));
  Image out(c.input_size, c.input_size, 3);
  for (int ty = 0; ty < g; ++ty)
    for (int tx = 0; tx < g; ++tx) {
      const double* src = g_patches.row(ty * g + tx);
      for (int py = 0; py < P; ++py) {
        double* dst = out.row_ptr(ty * P + py) + static_cast<std::size_t>(tx * P) * 3;
        for (int k = 0; k < P * 3; ++k) dst[k] = 2.0 * src[py * P * 3 + k];
      }
    }
  return out;
}

std::vector<double> SurrogateVictim::answer_scores(const Matrix& projector, std::string_view prompt) const {
  const auto& c = config_;
  if (projector.rows() != c.proj_rows || projector.cols() != c.proj_dim)
    throw ShapeMismatch("projector features have the wrong shape");
  std::vector<double> q(static_cast<std::size_t>(c.proj_dim), 0.0);
  for (int r = 0; r < projector.rows(); ++r)
    simd::axpy(w_.head_pool(0, r), projector.row(r), q.data(), q.size());
  simd::axpy(-1.0, w_.head_center.data(), q.data(), q.size());
  const auto tokens = tokenize(prompt);
  for (const auto& tok : tokens) {
    const std::string h = fnv1a_hex(tok);
    const auto bucket = static_cast<int>(std::stoull(h.substr(0, 8), nullptr, 16) % static_cast<unsigned>(c.text_buckets));
    simd::axpy(1.0 / static_cast<double>(tokens.size()), w_.text_embed.row(bucket), q.data(), q.size());
  }
  const Matrix& proto = w_.prototypes[static_cast<std::size_t>(route_prompt(prompt))];
  std::vector<double> scores(5);
  for (int k = 0; k < 5; ++k) scores[static_cast<std::size_t>(k)] = simd::dot(q.data(), proto.row(k), q.size());
  return scores;
}

std::string SurrogateVictim::generate_from_input(const Image& input, std::string_view prompt) const {
  const FeatureStack fs = forward(input, nullptr);
  const auto scores = answer_scores(fs.layer("projector"), prompt);
  const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  return surrogate_answers(route_prompt(prompt))[best];
}

std::vector<std::string> SurrogateVictim::generate_many_from_input(const Image& input,
                                                                   std::span<const std::string> prompts) const {
  const FeatureStack fs = forward(input, nullptr);
  std::vector<std::string> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) {
    const auto scores = answer_scores(fs.layer("projector"), p);
    const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    out.push_back(surrogate_answers(route_prompt(p))[best]);
  }
  return out;
}

// ---------------------------------------------------------------------------

void SurrogateVictim::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write surrogate checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic);
  write_u32(os, kCheckpointVersion);
  const auto& c = config_;
  for (int v : {c.input_size, c.patch, c.embed_dim, c.hidden_dim, c.blocks, c.proj_rows, c.proj_dim,
                c.text_buckets, c.filter_freqs})
    write_u32(os, static_cast<std::uint32_t>(v));
  write_f64(os, c.filter_noise);
  write_f64(os, c.text_scale);
  write_f64(os, c.head_focus);
  write_f64(os, c.head_blend);
  write_u64(os, c.seed);

  std::vector<std::pair<std::string, const Matrix*>> tensors = {
      {"patch_embed", &w_.patch_embed}, {"embed_bias", &w_.embed_bias}, {"position", &w_.position},
      {"pool", &w_.pool},               {"proj", &w_.proj},             {"proj_bias", &w_.proj_bias},
      {"head_center", &w_.head_center}, {"text_embed", &w_.text_embed},     {"head_pool", &w_.head_pool},
  };
  for (std::size_t b = 0; b < w_.w1.size(); ++b) {
    tensors.emplace_back("w1." + std::to_string(b), &w_.w1[b]);
    tensors.emplace_back("b1." + std::to_string(b), &w_.b1[b]);
    tensors.emplace_back("w2." + std::to_string(b), &w_.w2[b]);
  }
  for (std::size_t s = 0; s < 3; ++s) tensors.emplace_back("proto." + std::to_string(s), &w_.prototypes[s]);

  write_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(m->rows()));
    write_u32(os, static_cast<std::uint32_t>(m->cols()));
    os.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing surrogate checkpoint " + path.string());
}

SurrogateVictim SurrogateVictim::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFile("surrogate checkpoint not found: " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw FormatError(path.string() + " is not a surrogate checkpoint");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw VersionError("surrogate checkpoint version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  SurrogateConfig c;
  for (int* f : {&c.input_size, &c.patch, &c.embed_dim, &c.hidden_dim, &c.blocks, &c.proj_rows, &c.proj_dim,
                 &c.text_buckets, &c.filter_freqs})
    *f = static_cast<int>(read_pod<std::uint32_t>(is));
  c.filter_noise = read_pod<double>(is);
  c.text_scale = read_pod<double>(is);
  c.head_focus = read_pod<double>(is);
  c.head_blend = read_pod<double>(is);
  c.seed = read_pod<std::uint64_t>(is);
  if (c.blocks < 0 || c.blocks > 1024) throw FormatError("implausible block count in checkpoint");

  std::map<std::string, Matrix> tensors;
  const auto count = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = read_pod<std::uint32_t>(is);
    if (len > 256) throw FormatError("corrupt tensor name in checkpoint");
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rows = read_pod<std::uint32_t>(is), cols = read_pod<std::uint32_t>(is);
    if (static_cast<std::uint64_t>(rows) * cols > (1ULL << 28)) throw FormatError("corrupt tensor shape");
    Matrix m(static_cast<int>(rows), static_cast<int>(cols));
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) throw FormatError("surrogate checkpoint is truncated");
    tensors[name] = std::move(m);
  }
  auto take = [&](const std::string& name, int rows, int cols) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint lacks tensor '" + name + "'");
    if (it->second.rows() != rows || it->second.cols() != cols)
      throw FormatError("checkpoint tensor '" + name + "' has the wrong shape");
    return std::move(it->second);
  };
  Weights w;
  const int D = c.embed_dim, H = c.hidden_dim, P = c.proj_dim;
  w.patch_embed = take("patch_embed", c.patch_dim(), D);
  w.embed_bias = take("embed_bias", 1, D);
  w.position = take("position", c.tokens(), D);
  w.pool = take("pool", c.proj_rows, c.tokens());
  w.proj = take("proj", D, P);
  w.proj_bias = take("proj_bias", 1, P);
  w.head_center = take("head_center", 1, P);
  w.head_pool = take("head_pool", 1, c.proj_rows);
  w.text_embed = take("text_embed", c.text_buckets, P);
  for (int b = 0; b < c.blocks; ++b) {
    w.w1.push_back(take("w1." + std::to_string(b), D, H));
    w.b1.push_back(take("b1." + std::to_string(b), 1, H));
    w.w2.push_back(take("w2." + std::to_string(b), H, D));
  }
  for (int s = 0; s < 3; ++s) w.prototypes[static_cast<std::size_t>(s)] = take("proto." + std::to_string(s), 5, P);
  return SurrogateVictim(c, std::move(w));
}

}  // namespace uca
