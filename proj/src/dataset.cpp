#include "omsd/dataset.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <numeric>

namespace omsd::data {

namespace {

constexpr char kMagic[8] = {'O', 'M', 'S', 'D', 'D', 'S', '1', '\0'};

std::array<uint64_t, 256> make_crc64_table() {
    // reflected ECMA-182 polynomial
    constexpr uint64_t poly = 0xC96C5795D7870F42ULL;
    std::array<uint64_t, 256> table{};
    for (uint64_t i = 0; i < 256; ++i) {
        uint64_t crc = i;
        for (int bit = 0; bit < 8; ++bit)
            crc = (crc & 1) ? (crc >> 1) ^ poly : crc >> 1;
        table[i] = crc;
    }
    return table;
}

const std::array<uint64_t, 256>& crc64_table() {
    static const auto table = make_crc64_table();
    return table;
}

class CrcWriter {
public:
    explicit CrcWriter(std::ostream& out) : out_(out) {}

    void write(const void* data, size_t len) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
        crc_ = crc64(static_cast<const uint8_t*>(data), len, crc_);
    }

    void write_matrix(const Matrix& m) {
        // Eigen's default column-major layout matches the on-disk layout.
        write(m.data(), sizeof(double) * static_cast<size_t>(m.size()));
    }

    uint64_t crc() const { return crc_; }

private:
    std::ostream& out_;
    uint64_t crc_ = 0;
};

class CrcReader {
public:
    explicit CrcReader(std::istream& in) : in_(in) {}

    void read(void* data, size_t len) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
        if (!in_) throw IntegrityError("dataset: truncated payload");
        crc_ = crc64(static_cast<uint8_t*>(data), len, crc_);
    }

    void read_matrix(Matrix& m) { read(m.data(), sizeof(double) * static_cast<size_t>(m.size())); }

    uint64_t crc() const { return crc_; }

private:
    std::istream& in_;
    uint64_t crc_ = 0;
};

}  // namespace

uint64_t crc64(const uint8_t* data, size_t len, uint64_t seed) {
    const auto& table = crc64_table();
    uint64_t crc = ~seed;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

int DatasetMeta::joint_action_dim() const {
    return std::accumulate(action_dims.begin(), action_dims.end(), 0);
}

nlohmann::json DatasetMeta::to_json() const {
    return nlohmann::json{
        {"env_id", env_id},         {"n_agents", n_agents},
        {"state_dim", state_dim},   {"action_dims", action_dims},
        {"n_transitions", n_transitions}, {"quality", quality},
        {"seed", seed},             {"format_version", format_version},
        {"mean_return", mean_return}, {"max_return", max_return},
    };
}

DatasetMeta DatasetMeta::from_json(const nlohmann::json& j) {
    DatasetMeta m;
    m.env_id = j.at("env_id").get<std::string>();
    m.n_agents = j.at("n_agents").get<int>();
    m.state_dim = j.at("state_dim").get<int>();
    m.action_dims = j.at("action_dims").get<std::vector<int>>();
    m.n_transitions = j.at("n_transitions").get<long>();
    m.quality = j.at("quality").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    m.format_version = j.at("format_version").get<int>();
    m.mean_return = j.at("mean_return").get<double>();
    m.max_return = j.at("max_return").get<double>();
    return m;
}

void Dataset::validate() const {
    const long n = meta.n_transitions;
    if (states.cols() != n || actions.cols() != n || rewards.size() != n ||
        next_states.cols() != n || static_cast<long>(dones.size()) != n)
        throw ShapeError("dataset: column lengths disagree with n_transitions");
    if (states.rows() != meta.state_dim || actions.rows() != meta.joint_action_dim())
        throw ShapeError("dataset: row dims disagree with metadata");
    if (!rewards.allFinite()) throw IntegrityError("dataset: non-finite reward");
}

int Dataset::agent_action_offset(int agent) const {
    int offset = 0;
    for (int i = 0; i < agent; ++i) offset += meta.action_dims[i];
    return offset;
}

void save_dataset(const Dataset& d, const std::string& path) {
    d.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("dataset: cannot open " + path + " for writing");
    out.write(kMagic, 8);
    const std::string meta_line = d.meta.to_json().dump() + "\n";
    out.write(meta_line.data(), static_cast<std::streamsize>(meta_line.size()));

    CrcWriter w(out);
    w.write_matrix(d.states);
    w.write_matrix(d.actions);
    w.write(d.rewards.data(), sizeof(double) * static_cast<size_t>(d.rewards.size()));
    w.write_matrix(d.next_states);
    w.write(d.dones.data(), d.dones.size());
    const uint64_t crc = w.crc();
    out.write(reinterpret_cast<const char*>(&crc), 8);
    if (!out) throw FormatError("dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("dataset: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("dataset: bad magic in " + path);
    std::string meta_line;
    if (!std::getline(in, meta_line)) throw IntegrityError("dataset: missing metadata line");

    Dataset d;
    try {
        d.meta = DatasetMeta::from_json(nlohmann::json::parse(meta_line));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset: bad metadata JSON: ") + e.what());
    }
    if (d.meta.format_version != kDatasetFormatVersion)
        throw FormatError("dataset: format version mismatch: expected " +
                          std::to_string(kDatasetFormatVersion) + ", found " +
                          std::to_string(d.meta.format_version));

    const long n = d.meta.n_transitions;
    d.states.resize(d.meta.state_dim, n);
    d.actions.resize(d.meta.joint_action_dim(), n);
    d.rewards.resize(n);
    d.next_states.resize(d.meta.state_dim, n);
    d.dones.resize(static_cast<size_t>(n));

    CrcReader r(in);
    r.read_matrix(d.states);
    r.read_matrix(d.actions);
    r.read(d.rewards.data(), sizeof(double) * static_cast<size_t>(n));
    r.read_matrix(d.next_states);
    r.read(d.dones.data(), d.dones.size());
    uint64_t stored_crc = 0;
    in.read(reinterpret_cast<char*>(&stored_crc), 8);
    if (!in) throw IntegrityError("dataset: missing trailing CRC");
    if (stored_crc != r.crc())
        throw IntegrityError("dataset: payload CRC mismatch in " + path);
    d.validate();
    return d;
}

BatchSampler::BatchSampler(const Dataset& dataset, int batch_size, uint64_t seed)
    : dataset_(dataset), batch_size_(batch_size), rng_(seed) {
    if (dataset.meta.n_transitions < 1) throw ConfigError("sampler: empty dataset");
    if (batch_size < 1) throw ConfigError("sampler: batch size must be >= 1");
}

std::vector<long> BatchSampler::sample_indices() {
    std::vector<long> idx(static_cast<size_t>(batch_size_));
    for (auto& i : idx)
        i = static_cast<long>(rng_.index(static_cast<uint64_t>(dataset_.meta.n_transitions)));
    return idx;
}

Batch BatchSampler::sample() {
    const auto idx = sample_indices();
    Batch b;
    b.states.resize(dataset_.states.rows(), batch_size_);
    b.actions.resize(dataset_.actions.rows(), batch_size_);
    b.rewards.resize(batch_size_);
    b.next_states.resize(dataset_.next_states.rows(), batch_size_);
    b.dones.resize(batch_size_);
    for (int k = 0; k < batch_size_; ++k) {
        const long i = idx[static_cast<size_t>(k)];
        b.states.col(k) = dataset_.states.col(i);
        b.actions.col(k) = dataset_.actions.col(i);
        b.rewards(k) = dataset_.rewards(i);
        b.next_states.col(k) = dataset_.next_states.col(i);
        b.dones(k) = static_cast<double>(dataset_.dones[static_cast<size_t>(i)]);
    }
    return b;
}

}  // namespace omsd::data
