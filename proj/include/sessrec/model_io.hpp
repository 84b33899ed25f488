#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sessrec/errors.hpp"
#include "sessrec/gru4rec.hpp"
#include "sessrec/sknn.hpp"

namespace sessrec {

// Binary model snapshots. Layout: 8-byte magic, u32 format version, u32
// model type, length-prefixed resolved-config JSON, typed payload. All
// integers and IEEE doubles are little-endian, so files round-trip exactly
// and are portable across machines.

namespace detail {

inline constexpr char kModelMagic[8] = {'S', 'R', 'E', 'C', 'M', 'D', 'L', '\0'};
inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr std::uint32_t kModelTypeSknn = 1;
inline constexpr std::uint32_t kModelTypeGru = 2;

inline void write_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

inline void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(out, bits);
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void write_f64_vec(std::ostream& out, const std::vector<double>& v) {
    write_u64(out, v.size());
    for (double x : v) write_f64(out, x);
}

inline std::uint64_t read_u64(std::istream& in) {
    char b[8];
    in.read(b, 8);
    if (!in) throw DataError("truncated model file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
}

inline std::uint32_t read_u32(std::istream& in) {
    char b[4];
    in.read(b, 4);
    if (!in) throw DataError("truncated model file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
}

inline double read_f64(std::istream& in) {
    const std::uint64_t bits = read_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline std::string read_string(std::istream& in) {
    const std::uint64_t n = read_u64(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw DataError("truncated model file");
    return s;
}

inline std::vector<double> read_f64_vec(std::istream& in) {
    const std::uint64_t n = read_u64(in);
    std::vector<double> v(n);
    for (auto& x : v) x = read_f64(in);
    return v;
}

inline void write_header(std::ostream& out, std::uint32_t type, const std::string& config_json) {
    out.write(kModelMagic, 8);
    write_u32(out, kModelVersion);
    write_u32(out, type);
    write_string(out, config_json);
}

inline std::string read_header(std::istream& in, std::uint32_t expected_type,
                               const std::string& path) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kModelMagic, 8) != 0) {
        throw DataError(path + " is not a model file");
    }
    const std::uint32_t version = read_u32(in);
    if (version != kModelVersion) {
        throw DataError(path + ": unsupported model format version " + std::to_string(version));
    }
    const std::uint32_t type = read_u32(in);
    if (type != expected_type) {
        throw DataError(path + ": wrong model type (expected " + std::to_string(expected_type) +
                        ", found " + std::to_string(type) + ")");
    }
    return read_string(in);
}

}  // namespace detail

inline void save_sknn(const SknnModel& model, const std::filesystem::path& path,
                      const std::string& config_json) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write model file: " + path.string());
    detail::write_header(out, detail::kModelTypeSknn, config_json);
    const SknnConfig& c = model.config();
    detail::write_u32(out, static_cast<std::uint32_t>(c.k));
    detail::write_u32(out, static_cast<std::uint32_t>(c.sample_size));
    detail::write_u32(out, c.similarity == Similarity::cosine ? 0 : 1);
    detail::write_u32(out, c.neighbor_item_scoring == NeighborItemScoring::similarity_sum ? 0 : 1);
    detail::write_u32(out, c.exclude_prefix_items ? 1 : 0);
    detail::write_u64(out, model.vocab_size());
    detail::write_u64(out, model.session_count());
    for (std::size_t s = 0; s < model.session_count(); ++s) {
        const auto& set = model.item_set(s);
        detail::write_u64(out, set.size());
        for (ItemIndex i : set) detail::write_u32(out, static_cast<std::uint32_t>(i));
        detail::write_f64(out, model.start_time(s));
    }
    if (!out) throw DataError("write failed: " + path.string());
}

inline SknnModel load_sknn(const std::filesystem::path& path, std::string* config_json = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open model file: " + path.string() +
                        " (run the train command first)");
    }
    std::string cfg_line = detail::read_header(in, detail::kModelTypeSknn, path.string());
    if (config_json) *config_json = std::move(cfg_line);
    SknnConfig c;
    c.k = static_cast<int>(detail::read_u32(in));
    c.sample_size = static_cast<int>(detail::read_u32(in));
    c.similarity = detail::read_u32(in) == 0 ? Similarity::cosine : Similarity::jaccard;
    c.neighbor_item_scoring = detail::read_u32(in) == 0 ? NeighborItemScoring::similarity_sum
                                                        : NeighborItemScoring::popularity_in_neighborhood;
    c.exclude_prefix_items = detail::read_u32(in) != 0;
    const std::uint64_t n_items = detail::read_u64(in);
    const std::uint64_t n_sessions = detail::read_u64(in);
    std::vector<Session> sessions(n_sessions);
    for (auto& s : sessions) {
        const std::uint64_t len = detail::read_u64(in);
        s.items.resize(len);
        for (auto& i : s.items) i = static_cast<ItemIndex>(detail::read_u32(in));
        s.start_time = detail::read_f64(in);
    }
    if (!in) throw DataError("truncated model file: " + path.string());
    return SknnModel(c, sessions, n_items);
}

inline void save_gru(const Gru4RecModel& model, const std::filesystem::path& path,
                     const std::string& config_json) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write model file: " + path.string());
    detail::write_header(out, detail::kModelTypeGru, config_json);
    const Gru4RecConfig& c = model.config();
    detail::write_u32(out, static_cast<std::uint32_t>(c.hidden_size));
    detail::write_f64(out, c.dropout);
    detail::write_f64(out, c.learning_rate);
    detail::write_f64(out, c.momentum);
    detail::write_u32(out, static_cast<std::uint32_t>(c.epochs));
    detail::write_u32(out, static_cast<std::uint32_t>(c.batch_size));
    detail::write_f64(out, c.bpr_reg_lambda);
    detail::write_u64(out, c.seed);
    const GruCell& cell = model.cell();
    detail::write_u64(out, cell.n_items);
    detail::write_u64(out, cell.hidden);
    detail::write_f64_vec(out, cell.w_r.a);
    detail::write_f64_vec(out, cell.w_z.a);
    detail::write_f64_vec(out, cell.w_c.a);
    detail::write_f64_vec(out, cell.u_r.a);
    detail::write_f64_vec(out, cell.u_z.a);
    detail::write_f64_vec(out, cell.u_c.a);
    detail::write_f64_vec(out, cell.b_r);
    detail::write_f64_vec(out, cell.b_z);
    detail::write_f64_vec(out, cell.b_c);
    detail::write_f64_vec(out, model.output_weights().a);
    detail::write_f64_vec(out, model.output_bias());
    detail::write_f64_vec(out, model.epoch_losses());
    if (!out) throw DataError("write failed: " + path.string());
}

inline Gru4RecModel load_gru(const std::filesystem::path& path, std::string* config_json = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open model file: " + path.string() +
                        " (run the train command first)");
    }
    std::string cfg_line = detail::read_header(in, detail::kModelTypeGru, path.string());
    if (config_json) *config_json = std::move(cfg_line);
    Gru4RecConfig c;
    c.hidden_size = static_cast<int>(detail::read_u32(in));
    c.dropout = detail::read_f64(in);
    c.learning_rate = detail::read_f64(in);
    c.momentum = detail::read_f64(in);
    c.epochs = static_cast<int>(detail::read_u32(in));
    c.batch_size = static_cast<int>(detail::read_u32(in));
    c.bpr_reg_lambda = detail::read_f64(in);
    c.seed = detail::read_u64(in);
    GruCell cell;
    cell.n_items = detail::read_u64(in);
    cell.hidden = detail::read_u64(in);
    auto read_matrix = [&in](std::size_t rows, std::size_t cols) {
        Matrix m;
        m.rows = rows;
        m.cols = cols;
        m.a = detail::read_f64_vec(in);
        if (m.a.size() != rows * cols) throw DataError("model tensor has wrong shape");
        return m;
    };
    cell.w_r = read_matrix(cell.n_items, cell.hidden);
    cell.w_z = read_matrix(cell.n_items, cell.hidden);
    cell.w_c = read_matrix(cell.n_items, cell.hidden);
    cell.u_r = read_matrix(cell.hidden, cell.hidden);
    cell.u_z = read_matrix(cell.hidden, cell.hidden);
    cell.u_c = read_matrix(cell.hidden, cell.hidden);
    cell.b_r = detail::read_f64_vec(in);
    cell.b_z = detail::read_f64_vec(in);
    cell.b_c = detail::read_f64_vec(in);
    Matrix w_out = read_matrix(cell.n_items, cell.hidden);
    std::vector<double> b_out = detail::read_f64_vec(in);
    std::vector<double> losses = detail::read_f64_vec(in);
    if (!in) throw DataError("truncated model file: " + path.string());
    return Gru4RecModel::restore(c, std::move(cell), std::move(w_out), std::move(b_out),
                                 std::move(losses));
}

}  // namespace sessrec
