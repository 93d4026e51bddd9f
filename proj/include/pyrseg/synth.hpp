#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pyrseg/rng.hpp"
#include "pyrseg/tensor.hpp"

namespace pyrseg {

// Object families, each reproducing one segmentation difficulty:
// lens (deformable, transparent), pupil (colour/texture variation),
// cornea (blunt edges), instrument (thin, scale-varying, motion blurred).
enum class Family { lens, pupil, cornea, instrument };
inline constexpr std::array<Family, 4> kFamilies{Family::lens, Family::pupil, Family::cornea,
                                                  Family::instrument};
std::string to_string(Family f);
Family parse_family(const std::string& name);

struct SceneSpec {
  int size = 96;
  Family family = Family::pupil;
  // Relative amplitude of the sinusoidal boundary perturbation.
  float deformation = 0.f;
  // 0 = opaque object, 1 = invisible object.
  float transparency = 0.f;
  // Gaussian sigma (pixels) applied to the alpha matte only.
  float edge_softness = 0.f;
  // Multiplier range on the family base extent.
  float scale_min = 1.f;
  float scale_max = 1.f;
  std::uint64_t texture_seed = 0;
  // Places the object at the image centre with zero rotation.
  bool centered = false;

  void validate() const;
  // Corpus defaults per family at the given size.
  static SceneSpec family_default(Family family, int size);
};

// Base size of a family's object in pixels at scale 1: disc radius (pupil),
// ellipse major semi-axis (lens), outer ring radius (cornea) or bar length
// (instrument).
float family_base_extent(Family family, int size);

struct SegSample {
  Tensor image;  // [1,3,H,W] in [0,1]
  Tensor mask;   // [1,1,H,W] in {0,1}
};

// Geometry (and hence the mask) is decided before any photometric effect, so
// the mask does not depend on transparency or edge softness.
SegSample generate(const SceneSpec& spec, std::uint64_t seed);

struct AugmentOps {
  bool motion_blur = true;
  bool brightness_contrast = true;
  bool shift_scale_rotate = true;
};

struct AugmentParams {
  int blur_length = 1;     // odd; 1 disables the blur
  int blur_direction = 0;  // 0 horizontal, 1 vertical, 2 diagonal, 3 anti-diagonal
  float brightness = 0.f;
  float contrast = 1.f;
  float shift_x = 0.f;  // pixels
  float shift_y = 0.f;
  float scale = 1.f;
  float rotation_deg = 0.f;

  static AugmentParams sample(const AugmentOps& ops, int size, Rng& rng);
  bool geometric_identity() const;
};

// Geometric transform (image bilinear, mask nearest), then brightness and
// contrast, then motion blur. Photometric steps never touch the mask.
SegSample augment(const SegSample& sample, const AugmentParams& params);
SegSample augment(const SegSample& sample, const AugmentOps& ops, std::uint64_t seed);

// Normalized length-L line kernel with replicated borders.
Tensor motion_blur(const Tensor& image, int length, int direction);

// 8-bit binary PPM (P6) and PGM (P5) I/O.
void write_ppm(const std::string& path, const Tensor& image);
void write_pgm(const std::string& path, const Tensor& mask);
Tensor read_ppm(const std::string& path);
Tensor read_pgm(const std::string& path);

// `<stem>.ppm` holds the image and `<stem>.pgm` the mask (0/255).
void save_sample(const SegSample& sample, const std::string& stem);
SegSample load_sample(const std::string& stem);

struct CorpusSpec {
  std::string root = "corpus";
  int size = 96;
  int train = 400;
  int val = 40;
  int test = 100;
  std::uint64_t seed = 1;

  void validate() const;
};

struct CorpusEntry {
  std::string split;
  Family family = Family::pupil;
  std::uint64_t seed = 0;
};

struct Corpus {
  std::string root;
  int size = 0;
  std::vector<CorpusEntry> entries;

  std::vector<CorpusEntry> split(const std::string& name) const;
  std::string stem(const CorpusEntry& entry) const;
};

// Seed ranges of the three splits never overlap.
std::uint64_t split_seed_base(const std::string& split, std::uint64_t corpus_seed);

// Writes `<root>/<split>/<family>/<seed>.{ppm,pgm}` plus `<root>/corpus.txt`.
Corpus generate_corpus(const CorpusSpec& spec);
Corpus load_corpus(const std::string& root);
SegSample load_entry(const Corpus& corpus, const CorpusEntry& entry);

}  // namespace pyrseg
