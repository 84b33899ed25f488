#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "sessrec/core.hpp"
#include "sessrec/errors.hpp"
#include "sessrec/recommender.hpp"

namespace sessrec {

struct Gru4RecConfig {
    int hidden_size = 100;
    double dropout = 0.3;
    double learning_rate = 0.03;
    double momentum = 0.1;
    int epochs = 10;
    int batch_size = 32;
    double bpr_reg_lambda = 1.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (hidden_size < 1) throw ConfigError("gru4rec hidden_size must be >= 1");
        if (!(dropout >= 0.0) || dropout >= 1.0) throw ConfigError("gru4rec dropout must be in [0,1)");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw ConfigError("gru4rec learning_rate must be positive and finite");
        }
        if (!(momentum >= 0.0) || momentum >= 1.0) throw ConfigError("gru4rec momentum must be in [0,1)");
        if (epochs < 0) throw ConfigError("gru4rec epochs must be >= 0");
        if (batch_size < 2) throw ConfigError("gru4rec batch_size must be >= 2");
        if (!(bpr_reg_lambda >= 0.0) || !std::isfinite(bpr_reg_lambda)) {
            throw ConfigError("gru4rec bpr_reg_lambda must be >= 0 and finite");
        }
    }
};

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    void assign(std::size_t r, std::size_t c, double v = 0.0) {
        rows = r;
        cols = c;
        a.assign(r * c, v);
    }
    double* row(std::size_t r) { return a.data() + r * cols; }
    const double* row(std::size_t r) const { return a.data() + r * cols; }
};

// ---------------------------------------------------------------------------
// BPR-max loss
// ---------------------------------------------------------------------------
// L = -log(sum_j s_j * sigmoid(r_t - r_j)) + lambda * sum_j s_j * r_j^2,
// with s = softmax over the negative scores.

struct BprMaxGrad {
    double loss = 0.0;
    double d_target = 0.0;
    std::vector<double> d_negatives;
};

inline BprMaxGrad bpr_max_gradient(double target_score, const std::vector<double>& negative_scores,
                                   double lambda) {
    if (negative_scores.empty()) throw DataError("bpr-max needs at least one negative score");
    const std::size_t n = negative_scores.size();

    const double m = *std::max_element(negative_scores.begin(), negative_scores.end());
    std::vector<double> s(n);
    double se = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        s[j] = std::exp(negative_scores[j] - m);
        se += s[j];
    }
    for (double& v : s) v /= se;

    std::vector<double> sig(n);
    double p = 0.0, r2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        sig[j] = 1.0 / (1.0 + std::exp(negative_scores[j] - target_score));
        p += s[j] * sig[j];
        r2 += s[j] * negative_scores[j] * negative_scores[j];
    }
    p = std::max(p, 1e-300);

    BprMaxGrad g;
    g.loss = -std::log(p) + lambda * r2;
    double dsum = 0.0;
    for (std::size_t j = 0; j < n; ++j) dsum += s[j] * sig[j] * (1.0 - sig[j]);
    g.d_target = -dsum / p;
    g.d_negatives.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double sigp = sig[k] * (1.0 - sig[k]);
        const double rk = negative_scores[k];
        g.d_negatives[k] = -(s[k] * (sig[k] - p - sigp)) / p + lambda * s[k] * (rk * rk - r2 + 2.0 * rk);
    }
    return g;
}

inline double bpr_max_loss(double target_score, const std::vector<double>& negative_scores,
                           double lambda) {
    return bpr_max_gradient(target_score, negative_scores, lambda).loss;
}

// ---------------------------------------------------------------------------
// GRU cell
// ---------------------------------------------------------------------------

struct GruCell {
    std::size_t n_items = 0;
    std::size_t hidden = 0;
    Matrix w_r, w_z, w_c;            // n_items x hidden, one-hot input rows
    Matrix u_r, u_z, u_c;            // hidden x hidden
    std::vector<double> b_r, b_z, b_c;
};

struct GruStepTrace {
    std::vector<double> r, z, c, rh;
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void matvec(const Matrix& m, const std::vector<double>& v, std::vector<double>& out) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) acc += r[j] * v[j];
        out[i] = acc;
    }
}

// out += m^T * v
inline void matvec_t_add(const Matrix& m, const std::vector<double>& v, std::vector<double>& out) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        for (std::size_t j = 0; j < m.cols; ++j) out[j] += r[j] * v[i];
    }
}

}  // namespace detail

// One recurrence step for input item x (the one-hot input selects row x of
// each input weight matrix). Pass a trace to keep the gate activations.
inline std::vector<double> gru_cell_forward(const GruCell& cell, ItemIndex x,
                                            const std::vector<double>& h,
                                            GruStepTrace* trace = nullptr) {
    if (h.size() != cell.hidden) throw ContractViolation("gru_cell_forward: hidden size mismatch");
    if (x < 0 || static_cast<std::size_t>(x) >= cell.n_items) {
        throw DataError("gru_cell_forward: item outside vocabulary");
    }
    const std::size_t d = cell.hidden;
    const auto xi = static_cast<std::size_t>(x);
    std::vector<double> r(d), z(d), c(d), rh(d), out(d);

    detail::matvec(cell.u_r, h, r);
    detail::matvec(cell.u_z, h, z);
    const double* wr = cell.w_r.row(xi);
    const double* wz = cell.w_z.row(xi);
    for (std::size_t i = 0; i < d; ++i) {
        r[i] = detail::sigmoid(wr[i] + r[i] + cell.b_r[i]);
        z[i] = detail::sigmoid(wz[i] + z[i] + cell.b_z[i]);
        rh[i] = r[i] * h[i];
    }
    detail::matvec(cell.u_c, rh, c);
    const double* wc = cell.w_c.row(xi);
    for (std::size_t i = 0; i < d; ++i) {
        c[i] = std::tanh(wc[i] + c[i] + cell.b_c[i]);
        out[i] = (1.0 - z[i]) * h[i] + z[i] * c[i];
    }
    if (trace) {
        trace->r = std::move(r);
        trace->z = std::move(z);
        trace->c = std::move(c);
        trace->rh = std::move(rh);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

class Gru4RecModel : public Recommender {
public:
    Gru4RecModel() = default;
    Gru4RecModel(Gru4RecConfig config, const std::vector<Session>& train_sessions,
                 std::size_t vocab_size) {
        fit(std::move(config), train_sessions, vocab_size);
    }

    void fit(Gru4RecConfig config, const std::vector<Session>& train_sessions,
             std::size_t vocab_size);

    RankedScores score(const std::vector<ItemIndex>& prefix) const override {
        if (prefix.empty()) throw DataError("gru4rec score on empty prefix");
        std::vector<double> h(cell_.hidden, 0.0);
        for (ItemIndex x : prefix) h = gru_cell_forward(cell_, x, h);
        RankedScores out;
        out.values.resize(cell_.n_items);
        for (std::size_t i = 0; i < cell_.n_items; ++i) {
            const double* w = w_out_.row(i);
            double acc = b_out_[i];
            for (std::size_t j = 0; j < cell_.hidden; ++j) acc += w[j] * h[j];
            out.values[i] = acc;
        }
        return out;
    }

    std::size_t vocab_size() const override { return cell_.n_items; }
    const Gru4RecConfig& config() const { return config_; }
    const GruCell& cell() const { return cell_; }
    const Matrix& output_weights() const { return w_out_; }
    const std::vector<double>& output_bias() const { return b_out_; }
    // mean training loss per epoch, in epoch order
    const std::vector<double>& epoch_losses() const { return epoch_losses_; }

    static Gru4RecModel restore(Gru4RecConfig config, GruCell cell, Matrix w_out,
                                std::vector<double> b_out, std::vector<double> epoch_losses) {
        Gru4RecModel m;
        m.config_ = std::move(config);
        m.cell_ = std::move(cell);
        m.w_out_ = std::move(w_out);
        m.b_out_ = std::move(b_out);
        m.epoch_losses_ = std::move(epoch_losses);
        return m;
    }

private:
    Gru4RecConfig config_;
    GruCell cell_;
    Matrix w_out_;  // n_items x hidden
    std::vector<double> b_out_;
    std::vector<double> epoch_losses_;
};

namespace detail {

// 53-bit uniform in [0,1); avoids distribution implementation differences
// across standard libraries.
class UniformRng {
public:
    explicit UniformRng(std::uint64_t seed) : gen_(seed) {}
    double next() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double range(double lo, double hi) { return lo + next() * (hi - lo); }

private:
    std::mt19937_64 gen_;
};

inline void init_uniform(Matrix& m, std::size_t fan_in, std::size_t fan_out, UniformRng& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : m.a) v = rng.range(-s, s);
}

// Adagrad step for one dense tensor, with a classical momentum velocity on
// the adaptively scaled gradient.
inline void adagrad_momentum_update(std::vector<double>& theta, std::vector<double>& accum,
                                    std::vector<double>& velocity, const std::vector<double>& grad,
                                    double lr, double momentum) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grad[i];
        accum[i] += g * g;
        const double step = lr * g / std::sqrt(accum[i] + 1e-6);
        velocity[i] = momentum * velocity[i] - step;
        theta[i] += velocity[i];
    }
}

// Plain Adagrad for one row of a one-hot-addressed tensor.
inline void adagrad_row_update(double* theta, double* accum, const double* grad, std::size_t n,
                               double lr) {
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        accum[i] += g * g;
        theta[i] -= lr * g / std::sqrt(accum[i] + 1e-6);
    }
}

}  // namespace detail

inline void Gru4RecModel::fit(Gru4RecConfig config, const std::vector<Session>& train_sessions,
                              std::size_t vocab_size) {
    config.validate();
    config_ = std::move(config);
    epoch_losses_.clear();

    std::vector<const Session*> sessions;
    sessions.reserve(train_sessions.size());
    for (const auto& s : train_sessions) {
        if (s.items.size() >= 2) sessions.push_back(&s);
    }
    if (sessions.empty()) throw DataError("gru4rec fit: no training sessions with >= 2 items");

    const std::size_t d = static_cast<std::size_t>(config_.hidden_size);
    const std::size_t v = vocab_size;
    cell_.n_items = v;
    cell_.hidden = d;
    cell_.w_r.assign(v, d);
    cell_.w_z.assign(v, d);
    cell_.w_c.assign(v, d);
    cell_.u_r.assign(d, d);
    cell_.u_z.assign(d, d);
    cell_.u_c.assign(d, d);
    cell_.b_r.assign(d, 0.0);
    cell_.b_z.assign(d, 0.0);
    cell_.b_c.assign(d, 0.0);
    w_out_.assign(v, d);
    b_out_.assign(v, 0.0);

    detail::UniformRng rng(config_.seed);
    detail::init_uniform(cell_.w_r, v, d, rng);
    detail::init_uniform(cell_.w_z, v, d, rng);
    detail::init_uniform(cell_.w_c, v, d, rng);
    detail::init_uniform(cell_.u_r, d, d, rng);
    detail::init_uniform(cell_.u_z, d, d, rng);
    detail::init_uniform(cell_.u_c, d, d, rng);
    detail::init_uniform(w_out_, v, d, rng);

    if (config_.epochs == 0) return;

    // Adagrad accumulators; momentum velocities for the dense parameters.
    Matrix acc_wr, acc_wz, acc_wc, acc_wout;
    acc_wr.assign(v, d);
    acc_wz.assign(v, d);
    acc_wc.assign(v, d);
    acc_wout.assign(v, d);
    std::vector<double> acc_bout(v, 0.0);
    std::vector<double> acc_ur(d * d, 0.0), acc_uz(d * d, 0.0), acc_uc(d * d, 0.0);
    std::vector<double> acc_br(d, 0.0), acc_bz(d, 0.0), acc_bc(d, 0.0);
    std::vector<double> vel_ur(d * d, 0.0), vel_uz(d * d, 0.0), vel_uc(d * d, 0.0);
    std::vector<double> vel_br(d, 0.0), vel_bz(d, 0.0), vel_bc(d, 0.0);

    const auto b = static_cast<std::size_t>(config_.batch_size);
    struct Lane {
        std::size_t session = 0;
        std::size_t pos = 0;
        bool active = false;
        std::vector<double> h;
    };
    std::vector<Lane> lanes(b);

    struct RowGrad {
        std::vector<double> w;
        double bias = 0.0;
    };

    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
        std::size_t next_session = 0;
        for (auto& lane : lanes) {
            lane.active = next_session < sessions.size();
            if (lane.active) lane.session = next_session++;
            lane.pos = 0;
            lane.h.assign(d, 0.0);
        }

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        std::size_t step = 0;

        while (true) {
            std::vector<std::size_t> active;
            for (std::size_t l = 0; l < b; ++l) {
                if (lanes[l].active) active.push_back(l);
            }
            if (active.size() < 2) break;  // no in-batch negatives remain
            ++step;

            const std::size_t nb = active.size();
            std::vector<ItemIndex> inputs(nb), targets(nb);
            std::vector<GruStepTrace> traces(nb);
            std::vector<std::vector<double>> h_prev(nb), h_new(nb), masks(nb);
            for (std::size_t i = 0; i < nb; ++i) {
                Lane& lane = lanes[active[i]];
                const Session& s = *sessions[lane.session];
                inputs[i] = s.items[lane.pos];
                targets[i] = s.items[lane.pos + 1];
                h_prev[i] = lane.h;
                h_new[i] = gru_cell_forward(cell_, inputs[i], lane.h, &traces[i]);
                masks[i].assign(d, 1.0);
                if (config_.dropout > 0.0) {
                    const double keep = 1.0 - config_.dropout;
                    for (std::size_t j = 0; j < d; ++j) {
                        masks[i][j] = rng.next() >= config_.dropout ? 1.0 / keep : 0.0;
                        h_new[i][j] *= masks[i][j];
                    }
                }
            }

            // Scores of every lane's hidden state against every batch target.
            std::vector<std::vector<double>> scores(nb, std::vector<double>(nb));
            for (std::size_t i = 0; i < nb; ++i) {
                for (std::size_t j = 0; j < nb; ++j) {
                    const double* w = w_out_.row(static_cast<std::size_t>(targets[j]));
                    double acc = b_out_[static_cast<std::size_t>(targets[j])];
                    for (std::size_t t = 0; t < d; ++t) acc += w[t] * h_new[i][t];
                    scores[i][j] = acc;
                }
            }

            std::vector<std::vector<double>> dscores(nb, std::vector<double>(nb, 0.0));
            std::size_t n_loss = 0;
            std::vector<double> lane_loss(nb, 0.0);
            std::vector<bool> has_loss(nb, false);
            std::vector<double> negs;
            std::vector<std::size_t> neg_of;
            for (std::size_t i = 0; i < nb; ++i) {
                negs.clear();
                neg_of.clear();
                for (std::size_t j = 0; j < nb; ++j) {
                    // A batch item equal to the lane's own target is not a
                    // negative; scored identically, it would cancel the
                    // ranking signal entirely.
                    if (j == i || targets[j] == targets[i]) continue;
                    negs.push_back(scores[i][j]);
                    neg_of.push_back(j);
                }
                if (negs.empty()) continue;
                const auto g = bpr_max_gradient(scores[i][i], negs, config_.bpr_reg_lambda);
                if (!std::isfinite(g.loss)) {
                    throw NumericError("gru4rec training diverged: non-finite loss at epoch " +
                                       std::to_string(epoch) + " step " + std::to_string(step) +
                                       " lane " + std::to_string(active[i]) + " input item " +
                                       std::to_string(inputs[i]) + " target " +
                                       std::to_string(targets[i]));
                }
                has_loss[i] = true;
                lane_loss[i] = g.loss;
                ++n_loss;
                dscores[i][i] += g.d_target;
                for (std::size_t t = 0; t < neg_of.size(); ++t) {
                    dscores[i][neg_of[t]] += g.d_negatives[t];
                }
            }

            if (n_loss > 0) {
                const double inv = 1.0 / static_cast<double>(n_loss);
                for (std::size_t i = 0; i < nb; ++i) {
                    if (has_loss[i]) {
                        loss_sum += lane_loss[i];
                        ++loss_count;
                    }
                    for (std::size_t j = 0; j < nb; ++j) dscores[i][j] *= inv;
                }

                // Output layer: accumulate per distinct target row.
                std::unordered_map<ItemIndex, RowGrad> out_grads;
                std::vector<std::vector<double>> dh(nb, std::vector<double>(d, 0.0));
                for (std::size_t i = 0; i < nb; ++i) {
                    if (!has_loss[i]) continue;
                    for (std::size_t j = 0; j < nb; ++j) {
                        const double g = dscores[i][j];
                        if (g == 0.0) continue;
                        auto& rg = out_grads[targets[j]];
                        if (rg.w.empty()) rg.w.assign(d, 0.0);
                        const double* w = w_out_.row(static_cast<std::size_t>(targets[j]));
                        for (std::size_t t = 0; t < d; ++t) {
                            rg.w[t] += g * h_new[i][t];
                            dh[i][t] += g * w[t];
                        }
                        rg.bias += g;
                    }
                }

                // Backprop one step through the cell (truncated: no gradient
                // flows into the previous hidden state).
                std::vector<double> g_ur(d * d, 0.0), g_uz(d * d, 0.0), g_uc(d * d, 0.0);
                std::vector<double> g_br(d, 0.0), g_bz(d, 0.0), g_bc(d, 0.0);
                std::unordered_map<ItemIndex, std::array<std::vector<double>, 3>> in_grads;
                std::vector<double> da_c(d), da_z(d), da_r(d), drh(d);
                for (std::size_t i = 0; i < nb; ++i) {
                    if (!has_loss[i]) continue;
                    const auto& tr = traces[i];
                    for (std::size_t t = 0; t < d; ++t) {
                        const double dhp = dh[i][t] * masks[i][t];
                        const double dz = dhp * (tr.c[t] - h_prev[i][t]);
                        const double dc = dhp * tr.z[t];
                        da_c[t] = dc * (1.0 - tr.c[t] * tr.c[t]);
                        da_z[t] = dz * tr.z[t] * (1.0 - tr.z[t]);
                    }
                    std::fill(drh.begin(), drh.end(), 0.0);
                    detail::matvec_t_add(cell_.u_c, da_c, drh);
                    for (std::size_t t = 0; t < d; ++t) {
                        const double dr = drh[t] * h_prev[i][t];
                        da_r[t] = dr * tr.r[t] * (1.0 - tr.r[t]);
                    }
                    for (std::size_t r = 0; r < d; ++r) {
                        double* ur = g_ur.data() + r * d;
                        double* uz = g_uz.data() + r * d;
                        double* uc = g_uc.data() + r * d;
                        for (std::size_t t = 0; t < d; ++t) {
                            ur[t] += da_r[r] * h_prev[i][t];
                            uz[t] += da_z[r] * h_prev[i][t];
                            uc[t] += da_c[r] * tr.rh[t];
                        }
                    }
                    auto& ig = in_grads[inputs[i]];
                    for (auto& part : ig) {
                        if (part.empty()) part.assign(d, 0.0);
                    }
                    for (std::size_t t = 0; t < d; ++t) {
                        g_br[t] += da_r[t];
                        g_bz[t] += da_z[t];
                        g_bc[t] += da_c[t];
                        ig[0][t] += da_r[t];
                        ig[1][t] += da_z[t];
                        ig[2][t] += da_c[t];
                    }
                }

                detail::adagrad_momentum_update(cell_.u_r.a, acc_ur, vel_ur, g_ur,
                                                config_.learning_rate, config_.momentum);
                detail::adagrad_momentum_update(cell_.u_z.a, acc_uz, vel_uz, g_uz,
                                                config_.learning_rate, config_.momentum);
                detail::adagrad_momentum_update(cell_.u_c.a, acc_uc, vel_uc, g_uc,
                                                config_.learning_rate, config_.momentum);
                detail::adagrad_momentum_update(cell_.b_r, acc_br, vel_br, g_br,
                                                config_.learning_rate, config_.momentum);
                detail::adagrad_momentum_update(cell_.b_z, acc_bz, vel_bz, g_bz,
                                                config_.learning_rate, config_.momentum);
                detail::adagrad_momentum_update(cell_.b_c, acc_bc, vel_bc, g_bc,
                                                config_.learning_rate, config_.momentum);
                for (const auto& [item, ig] : in_grads) {
                    const auto r = static_cast<std::size_t>(item);
                    detail::adagrad_row_update(cell_.w_r.row(r), acc_wr.row(r), ig[0].data(), d,
                                               config_.learning_rate);
                    detail::adagrad_row_update(cell_.w_z.row(r), acc_wz.row(r), ig[1].data(), d,
                                               config_.learning_rate);
                    detail::adagrad_row_update(cell_.w_c.row(r), acc_wc.row(r), ig[2].data(), d,
                                               config_.learning_rate);
                }
                for (const auto& [item, rg] : out_grads) {
                    const auto r = static_cast<std::size_t>(item);
                    detail::adagrad_row_update(w_out_.row(r), acc_wout.row(r), rg.w.data(), d,
                                               config_.learning_rate);
                    const double g = rg.bias;
                    acc_bout[r] += g * g;
                    b_out_[r] -= config_.learning_rate * g / std::sqrt(acc_bout[r] + 1e-6);
                }
            }

            // Advance lanes; replace finished sessions, resetting that
            // lane's hidden state.
            for (std::size_t i = 0; i < nb; ++i) {
                Lane& lane = lanes[active[i]];
                lane.h = h_new[i];
                ++lane.pos;
                if (lane.pos + 1 >= sessions[lane.session]->items.size()) {
                    if (next_session < sessions.size()) {
                        lane.session = next_session++;
                        lane.pos = 0;
                        lane.h.assign(d, 0.0);
                    } else {
                        lane.active = false;
                    }
                }
            }
        }

        epoch_losses_.push_back(loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0);
    }
}

}  // namespace sessrec
