#include "sskd/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace sskd {

const char *to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

Sample Dataset::sample(Index i) const {
    return Sample{features.row(i).transpose(), identities[static_cast<std::size_t>(i)],
                  cameras[static_cast<std::size_t>(i)], domain};
}

void Dataset::push_back(const Sample &s) {
    if (size() > 0 && s.features.size() != dim())
        throw std::invalid_argument("Dataset::push_back: feature dimension mismatch");
    const Index n = size();
    features.conservativeResize(n + 1, s.features.size());
    features.row(n) = s.features.transpose();
    identities.push_back(s.identity);
    cameras.push_back(s.camera);
}

bool Dataset::fully_labeled() const {
    return std::all_of(identities.begin(), identities.end(),
                       [](const auto &id) { return id.has_value(); });
}

Dataset Dataset::without_identities() const {
    Dataset out = *this;
    for (auto &id : out.identities) id.reset();
    return out;
}

Dataset Dataset::subset(const std::vector<Index> &indices) const {
    Dataset out;
    out.domain = domain;
    out.features.resize(static_cast<Index>(indices.size()), dim());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        out.features.row(static_cast<Index>(r)) = features.row(indices[r]);
        out.identities.push_back(identities[static_cast<std::size_t>(indices[r])]);
        out.cameras.push_back(cameras[static_cast<std::size_t>(indices[r])]);
    }
    return out;
}

void DomainSpec::validate() const {
    if (n_identities < 1 || samples_per_identity < 1 || n_cameras < 1 || d_in < 1)
        throw std::invalid_argument("DomainSpec: counts and d_in must be >= 1");
    if (identity_rank < 0 || identity_rank > d_in)
        throw std::invalid_argument("DomainSpec: identity_rank must lie in [0, d_in]");
    if (identity_sigma < 0 || intra_class_sigma < 0 || camera_shift_sigma < 0 ||
        domain_offset_sigma < 0)
        throw std::invalid_argument("DomainSpec: sigmas must be >= 0");
    if (!(domain_rotation_angle >= 0 && domain_rotation_angle <= 3.14159265358979323846))
        throw std::invalid_argument("DomainSpec: rotation angle must lie in [0, pi]");
}

BenchmarkSpec bench_v1() {
    BenchmarkSpec b;
    b.source = DomainSpec{};
    b.source.identity_rank = 6;
    b.source.identity_sigma = 1.3;
    b.target = b.source;
    b.target.domain_rotation_angle = 0.5;
    b.target.domain_offset_sigma = 0.5;
    return b;
}

namespace {

std::uint64_t stream_base(Domain d) { return d == Domain::source ? 0x100 : 0x200; }
// Shared by both domains: the appearance subspace identities vary in.
constexpr std::uint64_t kIdentityBasisStream = 0x050;

Matrix gaussian_block(Index rows, Index cols, double sigma, Rng &rng) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = sigma * rng.normal();
    return m;
}

// Rotation by `angle` in the plane spanned by two random orthonormal vectors.
Matrix plane_rotation(Index d, double angle, Rng &rng) {
    Vector p(d), q(d);
    for (Index i = 0; i < d; ++i) p(i) = rng.normal();
    for (Index i = 0; i < d; ++i) q(i) = rng.normal();
    p.normalize();
    q -= p.dot(q) * p;
    q.normalize();
    Matrix r = Matrix::Identity(d, d);
    r += (std::cos(angle) - 1.0) * (p * p.transpose() + q * q.transpose());
    r += std::sin(angle) * (q * p.transpose() - p * q.transpose());
    return r;
}

} // namespace

Dataset generate_domain(const DomainSpec &spec, std::uint64_t seed, Domain domain) {
    spec.validate();
    const std::uint64_t base = stream_base(domain);
    Rng id_rng(seed, base + 1), cam_rng(seed, base + 2), noise_rng(seed, base + 3),
        shift_rng(seed, base + 4);

    const Index d = spec.d_in;
    Matrix means;
    if (spec.identity_rank > 0 && spec.identity_rank < d) {
        Rng basis_rng(seed, kIdentityBasisStream);
        const Eigen::MatrixXd g = gaussian_block(d, spec.identity_rank, 1.0, basis_rng);
        const Eigen::MatrixXd basis = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() *
                                      Eigen::MatrixXd::Identity(d, spec.identity_rank);
        means = gaussian_block(spec.n_identities, spec.identity_rank, spec.identity_sigma, id_rng) *
                basis.transpose();
    } else {
        means = gaussian_block(spec.n_identities, d, spec.identity_sigma, id_rng);
    }
    const Matrix cams = gaussian_block(spec.n_cameras, d, spec.camera_shift_sigma, cam_rng);

    Dataset out;
    out.domain = domain;
    const Index n = Index{spec.n_identities} * spec.samples_per_identity;
    out.features.resize(n, d);
    Index row = 0;
    for (int k = 0; k < spec.n_identities; ++k) {
        for (int s = 0; s < spec.samples_per_identity; ++s, ++row) {
            const int cam = s % spec.n_cameras;
            out.features.row(row) = means.row(k) + cams.row(cam);
            if (spec.intra_class_sigma > 0)
                for (Index j = 0; j < d; ++j)
                    out.features(row, j) += spec.intra_class_sigma * noise_rng.normal();
            out.identities.emplace_back(k);
            out.cameras.push_back(cam);
        }
    }

    if (domain == Domain::target) {
        if (spec.domain_rotation_angle != 0.0 && d >= 2) {
            const Matrix r = plane_rotation(d, spec.domain_rotation_angle, shift_rng);
            out.features = (out.features * r.transpose()).eval();
        }
        if (spec.domain_offset_sigma > 0) {
            const RowVector offset = gaussian_block(1, d, spec.domain_offset_sigma, shift_rng);
            out.features.rowwise() += offset;
        }
    }
    return out;
}

void AugmentSpec::validate() const {
    if (!(mask_fraction >= 0 && mask_fraction <= 1))
        throw std::invalid_argument("AugmentSpec: mask_fraction must lie in [0, 1]");
    if (!(scale_lo > 0 && scale_lo <= scale_hi))
        throw std::invalid_argument("AugmentSpec: need 0 < scale_lo <= scale_hi");
    if (jitter_sigma < 0) throw std::invalid_argument("AugmentSpec: jitter_sigma must be >= 0");
}

std::array<AugmentSpec, 3> default_view_specs() {
    return {AugmentSpec{0.10, 0.10, 0.90, 1.10}, AugmentSpec{0.15, 0.00, 0.80, 1.20},
            AugmentSpec{0.05, 0.20, 0.95, 1.05}};
}

Vector augment_view(const Vector &x, const AugmentSpec &spec, Rng &rng) {
    const Index d = x.size();
    Vector out(d);
    for (Index j = 0; j < d; ++j) out(j) = x(j) + spec.jitter_sigma * rng.normal();
    out *= rng.uniform(spec.scale_lo, spec.scale_hi);

    const auto n_mask = static_cast<Index>(std::llround(spec.mask_fraction * static_cast<double>(d)));
    if (n_mask > 0) {
        std::vector<Index> idx(static_cast<std::size_t>(d));
        std::iota(idx.begin(), idx.end(), Index{0});
        // partial Fisher-Yates: the first n_mask slots form a uniform subset
        for (Index i = 0; i < n_mask; ++i) {
            const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(d - i)));
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
            out(idx[static_cast<std::size_t>(i)]) = 0.0;
        }
    }
    return out;
}

Matrix augment_batch(const Matrix &x, const AugmentSpec &spec, Rng &rng) {
    Matrix out(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i)
        out.row(i) = augment_view(x.row(i).transpose(), spec, rng).transpose();
    return out;
}

CsvError::CsvError(std::size_t line, const std::string &msg)
    : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}

namespace {

std::vector<std::string_view> split_commas(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(',', start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_number(std::string_view s, T &out) {
    s = trim(s);
    if (s.empty()) return false;
    const char *end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

} // namespace

Dataset load_embeddings(const std::string &path, Domain domain) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);

    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw CsvError(1, "missing header");
    const auto header = split_commas(line);
    if (header.size() < 3 || trim(header[0]) != "id" || trim(header[1]) != "camera")
        throw CsvError(1, "header must be id,camera,f0,...");
    const std::size_t d = header.size() - 2;
    for (std::size_t j = 0; j < d; ++j)
        if (trim(header[j + 2]) != "f" + std::to_string(j))
            throw CsvError(1, "expected column f" + std::to_string(j));

    Dataset out;
    out.domain = domain;
    std::vector<double> values;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() != d + 2)
            throw CsvError(lineno, "expected " + std::to_string(d + 2) + " fields, found " +
                                       std::to_string(cells.size()));
        std::optional<int> id;
        if (!trim(cells[0]).empty()) {
            int v = 0;
            if (!parse_number(cells[0], v) || v < 0)
                throw CsvError(lineno, "id must be a non-negative integer");
            id = v;
        }
        int cam = 0;
        if (!parse_number(cells[1], cam)) throw CsvError(lineno, "camera must be an integer");
        if (cam < 0) throw CsvError(lineno, "negative camera id");
        for (std::size_t j = 0; j < d; ++j) {
            double v = 0;
            if (!parse_number(cells[j + 2], v) || !std::isfinite(v))
                throw CsvError(lineno, "non-numeric feature f" + std::to_string(j));
            values.push_back(v);
        }
        out.identities.push_back(id);
        out.cameras.push_back(cam);
    }
    const auto n = static_cast<Index>(out.cameras.size());
    out.features = Eigen::Map<const Matrix>(values.data(), n, static_cast<Index>(d));
    return out;
}

void save_embeddings(const std::string &path, const Dataset &data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "id,camera";
    for (Index j = 0; j < data.dim(); ++j) out << ",f" << j;
    out << '\n';
    char buf[64];
    for (Index i = 0; i < data.size(); ++i) {
        const auto &id = data.identities[static_cast<std::size_t>(i)];
        if (id) out << *id;
        out << ',' << data.cameras[static_cast<std::size_t>(i)];
        for (Index j = 0; j < data.dim(); ++j) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, data.features(i, j));
            out << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
        }
        out << '\n';
    }
}

} // namespace sskd
