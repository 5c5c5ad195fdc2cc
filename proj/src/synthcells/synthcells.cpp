#include "rashomon/synthcells/synthcells.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rashomon/common/error.hpp"
#include "rashomon/common/io.hpp"

namespace rashomon::synth {

std::string_view label_name(Label l) { return l == Label::Metaphase ? "metaphase" : "interphase"; }

Image render(const FactorVector& f, std::size_t height, std::size_t width, double noise_sd,
             double neighbor_amplitude) {
  if (!(f.size > 0.0)) throw Error("render: size must be positive");
  if (!(f.ecc >= 0.0)) throw Error("render: ecc must be non-negative");
  const double cx = (static_cast<double>(width) - 1.0) / 2.0 + f.dx;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0 + f.dy;
  if (!(cx >= 0.0 && cx <= static_cast<double>(width) - 1.0 && cy >= 0.0 && cy <= static_cast<double>(height) - 1.0))
    throw Error("render: central blob center (" + std::to_string(cx) + "," + std::to_string(cy) + ") is out of frame");

  Image img{height, width, std::vector<double>(height * width, 0.0)};
  // Equal-area ellipse: semi-axes size*sqrt(1+ecc) and size/sqrt(1+ecc).
  const double stretch = std::sqrt(1.0 + f.ecc);
  const double inv_major2 = 1.0 / (f.size * f.size * stretch * stretch);
  const double inv_minor2 = stretch * stretch / (f.size * f.size);
  const double c = std::cos(f.angle), s = std::sin(f.angle);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t col = 0; col < width; ++col) {
      const double x = static_cast<double>(col) - cx;
      const double y = static_cast<double>(r) - cy;
      double q;
      if (f.ecc == 0.0) {
        q = (x * x + y * y) / (f.size * f.size);
      } else {
        const double u = c * x + s * y;
        const double v = -s * x + c * y;
        q = u * u * inv_major2 + v * v * inv_minor2;
      }
      img.at(r, col) = std::exp(-0.5 * q);
    }
  }
  for (const auto& nb : f.neighbors) {
    const double inv = 1.0 / (nb.size * nb.size);
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t col = 0; col < width; ++col) {
        const double x = static_cast<double>(col) - nb.x;
        const double y = static_cast<double>(r) - nb.y;
        img.at(r, col) += neighbor_amplitude * std::exp(-0.5 * (x * x + y * y) * inv);
      }
  }
  Rng rng(f.noise_seed);
  for (auto& p : img.pixels) {
    if (noise_sd > 0.0) p += normal(rng, 0.0, noise_sd);
    p = std::clamp(p, 0.0, 1.0);
  }
  return img;
}

namespace {

// Normalized coordinates: u > 0 means smaller than threshold, v > 0 more elongated.
double norm_u(const FactorVector& f, const SynthConfig& cfg) {
  return (cfg.size_threshold - f.size) / cfg.size_half_range;
}
double norm_v(const FactorVector& f, const SynthConfig& cfg) {
  return (f.ecc - cfg.ecc_threshold) / cfg.ecc_half_range;
}

}  // namespace

Label label_rule(const FactorVector& f, const SynthConfig& cfg) {
  return f.size < cfg.size_threshold && f.ecc > cfg.ecc_threshold ? Label::Metaphase : Label::Interphase;
}

bool in_excluded_band(const FactorVector& f, const SynthConfig& cfg) {
  const double u = norm_u(f, cfg), v = norm_v(f, cfg);
  if (std::abs(u) <= cfg.axis_margin || std::abs(v) <= cfg.axis_margin) return true;
  return label_rule(f, cfg) == Label::Interphase && u + v >= -cfg.linear_margin;
}

std::vector<const ImageSample*> Dataset::split(bool test) const {
  std::vector<const ImageSample*> out;
  for (const auto& s : samples)
    if (s.test == test) out.push_back(&s);
  return out;
}

FactorVector sample_factors(Rng& rng, const SynthConfig& cfg, Label target) {
  FactorVector f;
  double u = 0.0;
  for (;;) {
    u = uniform(rng, -1.0, 1.0);
    const double v = uniform(rng, -1.0, 1.0);
    f.size = cfg.size_threshold - u * cfg.size_half_range;
    f.ecc = cfg.ecc_threshold + v * cfg.ecc_half_range;
    if (f.size > 0.0 && f.ecc >= 0.0 && !in_excluded_band(f, cfg) && label_rule(f, cfg) == target) break;
  }
  f.angle = uniform(rng, 0.0, 1.0) * cfg.angle_range;
  f.dx = uniform(rng, -cfg.max_offset, cfg.max_offset);
  f.dy = uniform(rng, -cfg.max_offset, cfg.max_offset);
  const double rate = std::max(0.0, cfg.neighbor_rate * (1.0 + u));
  int count = rate > 0.0 ? std::poisson_distribution<int>(rate)(rng) : 0;
  count = std::min(count, cfg.max_neighbors);
  const double cx = (static_cast<double>(cfg.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(cfg.height) - 1.0) / 2.0;
  for (int k = 0; k < count; ++k) {
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double dist = uniform(rng, cfg.neighbor_min_dist, cfg.neighbor_max_dist);
    f.neighbors.push_back({cx + dist * std::cos(phi), cy + dist * std::sin(phi), uniform(rng, 1.0, 2.0)});
  }
  f.noise_seed = rng();
  return f;
}

Dataset generate_dataset(std::size_t n, std::uint64_t seed, const SynthConfig& cfg) {
  if (n == 0) throw Error("generate_dataset: n must be positive");
  Dataset ds{cfg, {}};
  ds.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {i}));
    const Label target = std::bernoulli_distribution(0.5)(rng) ? Label::Metaphase : Label::Interphase;
    auto& s = ds.samples[i];
    s.id = i;
    s.factors = sample_factors(rng, cfg, target);
    s.label = label_rule(s.factors, cfg);
    s.image = render(s.factors, cfg.height, cfg.width, cfg.noise_sd, cfg.neighbor_amplitude);
  }
  // Stratified split: within each class, the samples with the smallest
  // hashed keys go to the test split.
  for (Label cls : {Label::Interphase, Label::Metaphase}) {
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    for (const auto& s : ds.samples)
      if (s.label == cls) keyed.emplace_back(derive_seed(seed, {s.id, 0x5eed}), s.id);
    std::sort(keyed.begin(), keyed.end());
    const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(keyed.size())));
    for (std::size_t k = 0; k < n_test; ++k) ds.samples[keyed[k].second].test = true;
  }
  return ds;
}

Image dihedral(const Image& img, int transform) {
  if (img.height != img.width) throw Error("dihedral transforms need a square image");
  if (transform < 0 || transform > 7) throw Error("dihedral transform index must be in 0..7");
  const std::size_t n = img.width;
  Image out = img;
  for (int k = 0; k < transform % 4; ++k) {
    Image rot = out;
    // quarter turn counter-clockwise
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) rot.at(r, c) = out.at(c, n - 1 - r);
    out = std::move(rot);
  }
  if (transform >= 4) {
    Image flip = out;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) flip.at(r, c) = out.at(r, n - 1 - c);
    out = std::move(flip);
  }
  return out;
}

Image augment(const Image& img, Rng& rng) {
  return dihedral(img, static_cast<int>(std::uniform_int_distribution<int>(0, 7)(rng)));
}

std::string encode_pgm(const Image& img, int maxval) {
  if (maxval < 1 || maxval > 65535) throw Error("PGM maxval must be in 1..65535");
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n" +
                    std::to_string(maxval) + "\n";
  for (double p : img.pixels) {
    auto q = static_cast<unsigned>(std::lround(std::clamp(p, 0.0, 1.0) * maxval));
    if (maxval > 255) out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xff));
  }
  return out;
}

Image decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
  };
  if (token() != "P5") throw Error("not a binary PGM");
  Image img;
  img.width = std::stoul(token());
  img.height = std::stoul(token());
  const int maxval = std::stoi(token());
  if (maxval < 1 || maxval > 65535) throw Error("bad PGM maxval");
  ++pos;  // single whitespace before raster
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (bytes.size() < pos + img.width * img.height * bpp) throw Error("truncated PGM raster");
  img.pixels.resize(img.width * img.height);
  for (auto& p : img.pixels) {
    unsigned q = static_cast<unsigned char>(bytes[pos++]);
    if (bpp == 2) q = (q << 8) | static_cast<unsigned char>(bytes[pos++]);
    p = static_cast<double>(q) / maxval;
  }
  return img;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::string blob, index = "id,offset,length\n";
  std::string factors = "id,label,size,ecc,angle,dx,dy,n_neighbors,split\n";
  for (const auto& s : ds.samples) {
    std::string rec = encode_pgm(s.image);
    index += std::to_string(s.id) + "," + std::to_string(blob.size()) + "," + std::to_string(rec.size()) + "\n";
    blob += rec;
    const auto& f = s.factors;
    factors += std::to_string(s.id) + "," + std::to_string(static_cast<int>(s.label)) + "," +
               io::format_double(f.size) + "," + io::format_double(f.ecc) + "," + io::format_double(f.angle) + "," +
               io::format_double(f.dx) + "," + io::format_double(f.dy) + "," + std::to_string(f.neighbors.size()) +
               "," + (s.test ? "test" : "train") + "\n";
  }
  io::atomic_write(dir / "images.pgm", blob);
  io::atomic_write(dir / "images.idx", index);
  io::atomic_write(dir / "factors.csv", factors);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

Dataset read_dataset(const std::filesystem::path& dir) {
  const std::string blob = io::read_file(dir / "images.pgm");
  std::stringstream idx(io::read_file(dir / "images.idx"));
  std::stringstream fac(io::read_file(dir / "factors.csv"));
  std::string line;
  Dataset ds;
  std::getline(idx, line);
  while (std::getline(idx, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 3) throw Error("bad index line: " + line);
    ImageSample s;
    s.id = std::stoul(f[0]);
    s.image = decode_pgm(std::string_view(blob).substr(std::stoul(f[1]), std::stoul(f[2])));
    ds.samples.push_back(std::move(s));
  }
  std::getline(fac, line);
  if (line != "id,label,size,ecc,angle,dx,dy,n_neighbors,split") throw Error("unexpected factors.csv header");
  std::size_t k = 0;
  while (std::getline(fac, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 9 || k >= ds.samples.size() || std::stoul(f[0]) != ds.samples[k].id)
      throw Error("factors.csv does not match the image index at line: " + line);
    auto& s = ds.samples[k++];
    s.label = std::stoi(f[1]) > 0 ? Label::Metaphase : Label::Interphase;
    s.factors.size = std::stod(f[2]);
    s.factors.ecc = std::stod(f[3]);
    s.factors.angle = std::stod(f[4]);
    s.factors.dx = std::stod(f[5]);
    s.factors.dy = std::stod(f[6]);
    s.factors.neighbors.resize(std::stoul(f[7]));
    s.test = f[8] == "test";
  }
  if (k != ds.samples.size()) throw Error("factors.csv has fewer rows than the image index");
  if (!ds.samples.empty()) {
    ds.config.height = ds.samples.front().image.height;
    ds.config.width = ds.samples.front().image.width;
  }
  return ds;
}

}  // namespace rashomon::synth
