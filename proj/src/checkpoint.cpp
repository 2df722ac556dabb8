#include "sskd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace sskd {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'K', 'D', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string &out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    out.append(reinterpret_cast<const char *>(bytes), sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string &b) : bytes_(b) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        unsigned char buf[sizeof(T)];
        std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        if constexpr (std::endian::native == std::endian::big)
            for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
        T value;
        std::memcpy(&value, buf, sizeof(T));
        return value;
    }

    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint: truncated data");
    }

    const std::string &bytes_;
    std::size_t pos_ = 0;
};

std::string prefix(bool teacher, std::size_t k) {
    return std::string(teacher ? "teacher" : "student") + std::to_string(k) + ".";
}

} // namespace

std::string serialize_checkpoint(const PeerEnsemble &ens) {
    std::string out(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(6 * kTensorCount));
    put<double>(out, ens.rho);
    put<std::int64_t>(out, ens.iteration);

    std::array<const PeerModel *, 6> models = {&ens.students[0], &ens.students[1], &ens.students[2],
                                               &ens.teachers[0], &ens.teachers[1], &ens.teachers[2]};
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
        const auto shapes = tensor_shapes(*models[mi]);
        for (std::size_t t = 0; t < kTensorCount; ++t) {
            const std::string name = prefix(mi >= 3, mi % 3) + std::string(kTensorNames[t]);
            put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
            out += name;
            put<std::uint32_t>(out, static_cast<std::uint32_t>(shapes[t].first));
            put<std::uint32_t>(out, static_cast<std::uint32_t>(shapes[t].second));
        }
    }
    for (const PeerModel *m : models)
        for (const auto &view : tensors(*m))
            for (Index i = 0; i < view.size(); ++i) put<double>(out, view(i));
    return out;
}

PeerEnsemble deserialize_checkpoint(const std::string &bytes) {
    Reader in(bytes);
    if (in.get_bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic))
        throw std::runtime_error("checkpoint: bad magic");
    const auto version = in.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const auto count = in.get<std::uint32_t>();
    if (count != 6 * kTensorCount)
        throw std::runtime_error("checkpoint: expected " + std::to_string(6 * kTensorCount) +
                                 " tensors, found " + std::to_string(count));

    PeerEnsemble ens;
    ens.rho = in.get<double>();
    ens.iteration = in.get<std::int64_t>();
    std::array<PeerModel *, 6> models = {&ens.students[0], &ens.students[1], &ens.students[2],
                                         &ens.teachers[0], &ens.teachers[1], &ens.teachers[2]};

    std::vector<std::pair<Index, Index>> shapes;
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
        for (std::size_t t = 0; t < kTensorCount; ++t) {
            const auto len = in.get<std::uint32_t>();
            const std::string name = in.get_bytes(len);
            const std::string expected = prefix(mi >= 3, mi % 3) + std::string(kTensorNames[t]);
            if (name != expected)
                throw std::runtime_error("checkpoint: expected tensor " + expected + ", found " + name);
            const auto rows = in.get<std::uint32_t>();
            const auto cols = in.get<std::uint32_t>();
            shapes.emplace_back(rows, cols);
        }
    }

    std::size_t s = 0;
    for (PeerModel *m : models) {
        auto &enc = m->encoder;
        enc.w1.resize(shapes[s].first, shapes[s].second);
        enc.b1.resize(shapes[s + 1].second);
        enc.w2.resize(shapes[s + 2].first, shapes[s + 2].second);
        enc.b2.resize(shapes[s + 3].second);
        m->head.w.resize(shapes[s + 4].first, shapes[s + 4].second);
        m->head.b.resize(shapes[s + 5].second);
        s += kTensorCount;
        for (auto view : tensors(*m))
            for (Index i = 0; i < view.size(); ++i) view(i) = in.get<double>();
    }
    if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes");
    return ens;
}

void write_checkpoint(const std::string &path, const PeerEnsemble &ens) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    const std::string bytes = serialize_checkpoint(ens);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

PeerEnsemble read_checkpoint(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

} // namespace sskd
