#pragma once

// Synthetic re-ID domains, feature-space view augmentation and the embedding
// CSV format.

#include "sskd/numerics.hpp"
#include "sskd/rng.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sskd {

enum class Domain { source, target };

const char *to_string(Domain d);

/// One feature vector with its (optional) identity and camera.
struct Sample {
    Vector features;
    std::optional<int> identity;
    int camera = 0;
    Domain domain = Domain::source;
};

/// Samples stored column-wise: row i of `features` is sample i.
struct Dataset {
    Domain domain = Domain::source;
    Matrix features;
    std::vector<std::optional<int>> identities;
    std::vector<int> cameras;

    Index size() const { return features.rows(); }
    Index dim() const { return features.cols(); }
    Sample sample(Index i) const;
    void push_back(const Sample &s);
    bool fully_labeled() const;
    /// Copy with every identity removed (what the adaptation stage may see).
    Dataset without_identities() const;
    /// Rows selected by `indices`, in that order.
    Dataset subset(const std::vector<Index> &indices) const;
};

struct DomainSpec {
    int n_identities = 50;
    int samples_per_identity = 12;
    int n_cameras = 4;
    int d_in = 32;
    double identity_sigma = 1.0; ///< per-coordinate spread of identity means
    /// Identity means vary only in a subspace of this dimension, shared by
    /// every domain drawn from the same seed; 0 means the full d_in.
    int identity_rank = 0;
    double intra_class_sigma = 0.35;
    double camera_shift_sigma = 0.25;
    double domain_rotation_angle = 0.0; ///< radians, rotation in one random plane
    double domain_offset_sigma = 0.0;

    void validate() const;
};

/// Frozen desk-scale benchmark "bench-v1".
struct BenchmarkSpec {
    DomainSpec source;
    DomainSpec target;
};
BenchmarkSpec bench_v1();

/// Identities 0..n-1, samples ordered identity-major, sample s of an identity
/// on camera s mod n_cameras. Target domains are additionally rotated and
/// translated.
Dataset generate_domain(const DomainSpec &spec, std::uint64_t seed, Domain domain);

struct AugmentSpec {
    double jitter_sigma = 0.0;
    double mask_fraction = 0.0;
    double scale_lo = 1.0;
    double scale_hi = 1.0;

    void validate() const;
};

/// The three view slots' default transforms.
std::array<AugmentSpec, 3> default_view_specs();

/// x' = scale * (x + jitter), then round(mask_fraction * d) coordinates,
/// chosen without replacement, set to zero.
Vector augment_view(const Vector &x, const AugmentSpec &spec, Rng &rng);
/// Row-wise augment_view over a batch, rows in order.
Matrix augment_batch(const Matrix &x, const AugmentSpec &spec, Rng &rng);

/// Raised for malformed embedding files; `line()` is 1-based.
class CsvError : public std::runtime_error {
public:
    CsvError(std::size_t line, const std::string &msg);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Header `id,camera,f0,...,f{d-1}`; empty `id` marks an unlabeled row.
Dataset load_embeddings(const std::string &path, Domain domain);
/// Writes values in shortest round-trip decimal form.
void save_embeddings(const std::string &path, const Dataset &data);

} // namespace sskd
