#pragma once

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "rashomon/common/rng.hpp"

namespace rashomon::synth {

enum class Label : int { Interphase = -1, Metaphase = 1 };

inline double label_value(Label l) { return static_cast<double>(static_cast<int>(l)); }
std::string_view label_name(Label l);

struct Neighbor {
  double x = 0.0;  // pixel coordinates of the blob center
  double y = 0.0;
  double size = 1.0;
};

/// Generative factors of one image. Offsets are relative to the frame center.
struct FactorVector {
  double size = 2.0;  // Gaussian radius of the central blob, pixels
  double ecc = 0.0;   // elongation ratio - 1
  double angle = 0.0; // major-axis orientation, radians
  double dx = 0.0;
  double dy = 0.0;
  std::vector<Neighbor> neighbors;
  std::uint64_t noise_seed = 0;
};

/// Grayscale image, row-major, values in [0,1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  friend bool operator==(const Image&, const Image&) = default;
};

struct SynthConfig {
  std::size_t height = 16;
  std::size_t width = 16;
  // Ground-truth rule: metaphase iff size < size_threshold and ecc > ecc_threshold.
  double size_threshold = 2.5;
  double size_half_range = 1.0;  // size drawn from threshold +/- half range
  double ecc_threshold = 0.5;
  double ecc_half_range = 0.5;
  // Major-axis orientation is drawn from [0, angle_range).
  double angle_range = std::numbers::pi;
  // Excluded bands, in units of the half ranges.
  double axis_margin = 0.1;
  double linear_margin = 0.15;
  double max_offset = 1.5;
  double noise_sd = 0.05;
  double neighbor_rate = 2.0;  // mean Poisson rate; larger cells get fewer neighbors
  int max_neighbors = 4;
  double neighbor_amplitude = 0.3;
  double neighbor_min_dist = 5.5;
  double neighbor_max_dist = 8.0;
  double test_fraction = 0.1;
};

/// Renders the central anisotropic Gaussian blob, the neighbor blobs and
/// clipped additive noise (seeded by f.noise_seed). Throws if the central
/// blob's center lies outside the frame.
Image render(const FactorVector& f, std::size_t height, std::size_t width, double noise_sd = 0.05,
             double neighbor_amplitude = 0.3);

Label label_rule(const FactorVector& f, const SynthConfig& cfg);

/// True when (size, ecc) falls in a band the generator never emits.
bool in_excluded_band(const FactorVector& f, const SynthConfig& cfg);

struct ImageSample {
  std::size_t id = 0;
  Image image;
  Label label = Label::Interphase;
  FactorVector factors;
  bool test = false;
};

struct Dataset {
  SynthConfig config;
  std::vector<ImageSample> samples;

  std::vector<const ImageSample*> split(bool test) const;
};

/// Draws one sample's factors from its own stream (class-first, rejection
/// sampling outside the excluded bands).
FactorVector sample_factors(Rng& rng, const SynthConfig& cfg, Label target);

/// n samples, deterministic in (n, seed, cfg). Split is 90/10 stratified by label.
Dataset generate_dataset(std::size_t n, std::uint64_t seed, const SynthConfig& cfg = {});

/// Dihedral transform index 0..7: k = rotation quarter-turns (0..3), +4 adds a
/// horizontal flip applied after the rotation. 0 is the identity.
Image dihedral(const Image& img, int transform);
/// One of the eight dihedral transforms chosen from `rng`.
Image augment(const Image& img, Rng& rng);

// ---- on-disk format -------------------------------------------------------
// <dir>/images.pgm   concatenated binary PGM (P5, maxval 65535) records
// <dir>/images.idx   CSV `id,offset,length` into images.pgm
// <dir>/factors.csv  `id,label,size,ecc,angle,dx,dy,n_neighbors,split`

std::string encode_pgm(const Image& img, int maxval = 65535);
Image decode_pgm(std::string_view bytes);

void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
/// Reads images, labels, splits and the scalar factors back (neighbor
/// positions are not stored; only their count).
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace rashomon::synth
