#include "cnet/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

namespace cnet {

std::string to_string(const MessageKey& key) {
    return std::string(to_string(key.kind)) + "/" + std::to_string(key.arity);
}

namespace {

Mlp make_mlp(int in, int hidden, int out, std::mt19937_64& rng) {
    Mlp m;
    m.in = in;
    m.hidden = hidden;
    m.out = out;
    auto fill = [&](std::vector<double>& w, int fan_in, int fan_out, double gain) {
        const double s = std::sqrt(gain / fan_in);
        std::uniform_real_distribution<double> u(-s, s);
        w.resize(static_cast<std::size_t>(fan_in) * static_cast<std::size_t>(fan_out));
        for (double& x : w) x = u(rng);
    };
    fill(m.w1, in, hidden, 6.0);
    fill(m.w2, hidden, out, 3.0);
    m.b1.assign(static_cast<std::size_t>(hidden), 0.0);
    m.b2.assign(static_cast<std::size_t>(out), 0.0);
    return m;
}

void zero_mlp(Mlp& m) {
    std::fill(m.w1.begin(), m.w1.end(), 0.0);
    std::fill(m.b1.begin(), m.b1.end(), 0.0);
    std::fill(m.w2.begin(), m.w2.end(), 0.0);
    std::fill(m.b2.begin(), m.b2.end(), 0.0);
}

// The kernels below fix the accumulation order per output element, so a row's
// result never depends on where the row sits in the batch.

// Y = X W + b, X rows x in, W in x out.
void affine(const double* X, int rows, int in, const std::vector<double>& W, const std::vector<double>& b, int out,
            double* Y) {
    for (int r = 0; r < rows; ++r) {
        double* y = Y + static_cast<std::ptrdiff_t>(r) * out;
        std::copy(b.begin(), b.end(), y);
        const double* x = X + static_cast<std::ptrdiff_t>(r) * in;
        for (int k = 0; k < in; ++k) {
            const double xk = x[k];
            if (xk == 0.0) continue;
            const double* w = W.data() + static_cast<std::ptrdiff_t>(k) * out;
            for (int j = 0; j < out; ++j) y[j] += xk * w[j];
        }
    }
}

void mlp_forward(const Mlp& m, const double* X, int rows, std::vector<double>& H, std::vector<double>& Y) {
    H.resize(static_cast<std::size_t>(rows) * static_cast<std::size_t>(m.hidden));
    affine(X, rows, m.in, m.w1, m.b1, m.hidden, H.data());
    for (double& h : H) h = h > 0.0 ? h : 0.0;
    Y.resize(static_cast<std::size_t>(rows) * static_cast<std::size_t>(m.out));
    affine(H.data(), rows, m.hidden, m.w2, m.b2, m.out, Y.data());
}

// Accumulates parameter gradients into g; writes dX (rows x in) when non-null.
void mlp_backward(const Mlp& m, Mlp& g, const double* X, int rows, const std::vector<double>& H, const double* dY,
                  double* dX) {
    const int in = m.in, hid = m.hidden, out = m.out;
    std::vector<double> dH(static_cast<std::size_t>(rows) * static_cast<std::size_t>(hid), 0.0);
    for (int r = 0; r < rows; ++r) {
        const double* dy = dY + static_cast<std::ptrdiff_t>(r) * out;
        const double* h = H.data() + static_cast<std::ptrdiff_t>(r) * hid;
        double* dh = dH.data() + static_cast<std::ptrdiff_t>(r) * hid;
        for (int j = 0; j < out; ++j) g.b2[static_cast<std::size_t>(j)] += dy[j];
        for (int k = 0; k < hid; ++k) {
            if (h[k] <= 0.0) continue;
            double* gw = g.w2.data() + static_cast<std::ptrdiff_t>(k) * out;
            const double* w = m.w2.data() + static_cast<std::ptrdiff_t>(k) * out;
            double acc = 0.0;
            for (int j = 0; j < out; ++j) {
                gw[j] += h[k] * dy[j];
                acc += dy[j] * w[j];
            }
            dh[k] = acc;
        }
    }
    for (int r = 0; r < rows; ++r) {
        const double* x = X + static_cast<std::ptrdiff_t>(r) * in;
        const double* dh = dH.data() + static_cast<std::ptrdiff_t>(r) * hid;
        for (int k = 0; k < hid; ++k) g.b1[static_cast<std::size_t>(k)] += dh[k];
        for (int i = 0; i < in; ++i) {
            if (x[i] == 0.0) continue;
            double* gw = g.w1.data() + static_cast<std::ptrdiff_t>(i) * hid;
            for (int k = 0; k < hid; ++k) gw[k] += x[i] * dh[k];
        }
        if (dX) {
            double* dx = dX + static_cast<std::ptrdiff_t>(r) * in;
            for (int i = 0; i < in; ++i) {
                const double* w = m.w1.data() + static_cast<std::ptrdiff_t>(i) * hid;
                double acc = 0.0;
                for (int k = 0; k < hid; ++k) acc += dh[k] * w[k];
                dx[i] = acc;
            }
        }
    }
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Graph-side inputs of a pass: raw features and message groups.
struct Prepared {
    struct Group {
        MessageKey key;
        const Mlp* net = nullptr;
        std::vector<int> constraints;
        std::vector<int> scope;  // constraints.size() x arity
    };
    int n = 0;
    std::vector<double> features;
    std::vector<Group> groups;
};

Prepared prepare(const GnnModel& model, const FactoredNlp& graph) {
    Prepared p;
    p.n = graph.num_variables();
    p.features = init_features(graph, model.hyper.n_f);
    std::map<MessageKey, std::size_t> index;
    for (const auto& con : graph.constraints()) {
        const int arity = static_cast<int>(con.scope.size());
        if (arity < 2) continue;
        const MessageKey key{con.kind, arity};
        auto it = index.find(key);
        if (it == index.end()) {
            auto net = model.messages.find(key);
            if (net == model.messages.end()) {
                throw Error("model/graph mismatch: no message network for " + to_string(key));
            }
            it = index.emplace(key, p.groups.size()).first;
            p.groups.push_back({key, &net->second, {}, {}});
        }
        auto& g = p.groups[it->second];
        g.constraints.push_back(con.id);
        g.scope.insert(g.scope.end(), con.scope.begin(), con.scope.end());
    }
    std::sort(p.groups.begin(), p.groups.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
    return p;
}

struct Tape {
    struct Round {
        std::vector<std::vector<double>> in, h, out;  // per group
        std::vector<double> agg;
        std::vector<std::int64_t> arg;  // winning message slot per (variable, channel), -1 if none
        std::vector<double> u, hu, z;
    };
    std::vector<double> eh, z0;
    std::vector<Round> rounds;
    std::vector<double> ch, logits;
};

void run_forward(const GnnModel& model, const Prepared& p, Tape& t) {
    const GnnHyper& hp = model.hyper;
    const int n = p.n, nz = hp.n_z, nmu = hp.n_mu;
    mlp_forward(model.embed, p.features.data(), n, t.eh, t.z0);
    t.rounds.assign(static_cast<std::size_t>(hp.rounds), {});
    const std::vector<double>* z_prev = &t.z0;
    for (int k = 0; k < hp.rounds; ++k) {
        auto& R = t.rounds[static_cast<std::size_t>(k)];
        R.in.resize(p.groups.size());
        R.h.resize(p.groups.size());
        R.out.resize(p.groups.size());
        R.agg.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(nmu), 0.0);
        R.arg.assign(R.agg.size(), -1);
        std::int64_t code_base = 0;
        for (std::size_t gi = 0; gi < p.groups.size(); ++gi) {
            const auto& g = p.groups[gi];
            const int a = g.key.arity;
            const int m = static_cast<int>(g.constraints.size());
            auto& in = R.in[gi];
            in.resize(static_cast<std::size_t>(m) * static_cast<std::size_t>(a * nz));
            for (int c = 0; c < m; ++c) {
                for (int s = 0; s < a; ++s) {
                    const int v = g.scope[static_cast<std::size_t>(c * a + s)];
                    std::copy_n(z_prev->data() + static_cast<std::ptrdiff_t>(v) * nz, nz,
                                in.data() + static_cast<std::ptrdiff_t>(c * a + s) * nz);
                }
            }
            mlp_forward(*g.net, in.data(), m, R.h[gi], R.out[gi]);
            const auto& out = R.out[gi];
            for (int c = 0; c < m; ++c) {
                for (int s = 0; s < a; ++s) {
                    const int v = g.scope[static_cast<std::size_t>(c * a + s)];
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(c * a + s) * nmu;
                    for (int ch = 0; ch < nmu; ++ch) {
                        const auto dst = static_cast<std::size_t>(v) * static_cast<std::size_t>(nmu) + static_cast<std::size_t>(ch);
                        const double val = out[static_cast<std::size_t>(src + ch)];
                        if (R.arg[dst] < 0 || val > R.agg[dst]) {
                            R.agg[dst] = val;
                            R.arg[dst] = code_base + src + ch;
                        }
                    }
                }
            }
            code_base += static_cast<std::int64_t>(out.size());
        }
        R.u.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(nmu + nz));
        for (int v = 0; v < n; ++v) {
            double* u = R.u.data() + static_cast<std::ptrdiff_t>(v) * (nmu + nz);
            std::copy_n(R.agg.data() + static_cast<std::ptrdiff_t>(v) * nmu, nmu, u);
            std::copy_n(z_prev->data() + static_cast<std::ptrdiff_t>(v) * nz, nz, u + nmu);
        }
        mlp_forward(model.update, R.u.data(), n, R.hu, R.z);
        z_prev = &R.z;
    }
    mlp_forward(model.classifier, z_prev->data(), n, t.ch, t.logits);
}

void run_backward(const GnnModel& model, const Prepared& p, const Tape& t, const std::vector<double>& dlogits,
                  GnnModel& grad) {
    const GnnHyper& hp = model.hyper;
    const int n = p.n, nz = hp.n_z, nmu = hp.n_mu;
    const std::vector<double>& zk = hp.rounds > 0 ? t.rounds.back().z : t.z0;
    std::vector<double> dz(static_cast<std::size_t>(n) * static_cast<std::size_t>(nz));
    mlp_backward(model.classifier, grad.classifier, zk.data(), n, t.ch, dlogits.data(), dz.data());

    std::map<MessageKey, Mlp*> gnets;
    for (auto& [key, net] : grad.messages) gnets[key] = &net;

    for (int k = hp.rounds - 1; k >= 0; --k) {
        const auto& R = t.rounds[static_cast<std::size_t>(k)];
        const std::vector<double>& z_prev = k > 0 ? t.rounds[static_cast<std::size_t>(k - 1)].z : t.z0;
        std::vector<double> du(static_cast<std::size_t>(n) * static_cast<std::size_t>(nmu + nz));
        mlp_backward(model.update, grad.update, R.u.data(), n, R.hu, dz.data(), du.data());
        std::vector<double> dz_prev(static_cast<std::size_t>(n) * static_cast<std::size_t>(nz));
        for (int v = 0; v < n; ++v) {
            std::copy_n(du.data() + static_cast<std::ptrdiff_t>(v) * (nmu + nz) + nmu, nz,
                        dz_prev.data() + static_cast<std::ptrdiff_t>(v) * nz);
        }
        // Route aggregate gradients to the winning message entries.
        std::vector<std::vector<double>> dout(p.groups.size());
        std::vector<std::int64_t> base(p.groups.size() + 1, 0);
        for (std::size_t gi = 0; gi < p.groups.size(); ++gi) {
            dout[gi].assign(R.out[gi].size(), 0.0);
            base[gi + 1] = base[gi] + static_cast<std::int64_t>(R.out[gi].size());
        }
        for (int v = 0; v < n; ++v) {
            for (int ch = 0; ch < nmu; ++ch) {
                const auto idx = static_cast<std::size_t>(v) * static_cast<std::size_t>(nmu) + static_cast<std::size_t>(ch);
                const std::int64_t code = R.arg[idx];
                if (code < 0) continue;
                const auto gi = static_cast<std::size_t>(std::upper_bound(base.begin(), base.end(), code) - base.begin() - 1);
                dout[gi][static_cast<std::size_t>(code - base[gi])] += du[static_cast<std::size_t>(v) * static_cast<std::size_t>(nmu + nz) + static_cast<std::size_t>(ch)];
            }
        }
        for (std::size_t gi = 0; gi < p.groups.size(); ++gi) {
            const auto& g = p.groups[gi];
            const int a = g.key.arity;
            const int m = static_cast<int>(g.constraints.size());
            std::vector<double> din(R.in[gi].size());
            mlp_backward(*g.net, *gnets.at(g.key), R.in[gi].data(), m, R.h[gi], dout[gi].data(), din.data());
            for (int c = 0; c < m; ++c) {
                for (int s = 0; s < a; ++s) {
                    const int v = g.scope[static_cast<std::size_t>(c * a + s)];
                    const double* src = din.data() + static_cast<std::ptrdiff_t>(c * a + s) * nz;
                    double* dst = dz_prev.data() + static_cast<std::ptrdiff_t>(v) * nz;
                    for (int j = 0; j < nz; ++j) dst[j] += src[j];
                }
            }
        }
        (void)z_prev;
        dz.swap(dz_prev);
    }
    mlp_backward(model.embed, grad.embed, p.features.data(), n, t.eh, dz.data(), nullptr);
}

/// Hash of every ReLU on/off bit and every max-aggregation winner.
std::uint64_t activation_signature(const Tape& t) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](std::uint64_t x) {
        h ^= x;
        h *= 1099511628211ULL;
    };
    auto mask = [&](const std::vector<double>& v) {
        for (double x : v) mix(x > 0.0 ? 1 : 2);
    };
    mask(t.eh);
    for (const auto& R : t.rounds) {
        for (const auto& hh : R.h) mask(hh);
        for (std::int64_t a : R.arg) mix(static_cast<std::uint64_t>(a + 7));
        mask(R.hu);
    }
    mask(t.ch);
    return h;
}

void check_labels(const std::vector<int>& labels, std::size_t n) {
    if (labels.size() != n) throw Error("labels/variables length mismatch");
    for (int y : labels) {
        if (y != 0 && y != 1) throw Error("labels must be 0 or 1");
    }
}

}  // namespace

std::vector<std::pair<std::string, std::vector<double>*>> GnnModel::tensors() {
    std::vector<std::pair<std::string, std::vector<double>*>> out;
    auto add = [&](const std::string& prefix, Mlp& m) {
        out.emplace_back(prefix + ".w1", &m.w1);
        out.emplace_back(prefix + ".b1", &m.b1);
        out.emplace_back(prefix + ".w2", &m.w2);
        out.emplace_back(prefix + ".b2", &m.b2);
    };
    add("embed", embed);
    add("update", update);
    add("classifier", classifier);
    for (auto& [key, net] : messages) {
        add("msg." + std::string(to_string(key.kind)) + "." + std::to_string(key.arity), net);
    }
    return out;
}

std::vector<std::pair<std::string, const std::vector<double>*>> GnnModel::tensors() const {
    std::vector<std::pair<std::string, const std::vector<double>*>> out;
    for (auto& [name, ptr] : const_cast<GnnModel*>(this)->tensors()) out.emplace_back(name, ptr);
    return out;
}

std::size_t GnnModel::num_parameters() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors()) n += t->size();
    return n;
}

std::vector<MessageKey> message_vocabulary(const FactoredNlp& graph) {
    std::vector<MessageKey> keys;
    for (const auto& con : graph.constraints()) {
        if (con.scope.size() >= 2) keys.push_back({con.kind, static_cast<int>(con.scope.size())});
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    return keys;
}

GnnModel make_model(const GnnHyper& hp, const std::vector<MessageKey>& vocabulary, std::uint64_t seed) {
    if (hp.n_f < kVarClassSlots || hp.n_z < 1 || hp.n_mu < 1 || hp.hidden < 1 || hp.rounds < 0) {
        throw Error("gnn: invalid hyperparameters");
    }
    std::mt19937_64 rng(seed);
    GnnModel m;
    m.hyper = hp;
    m.embed = make_mlp(hp.n_f, hp.hidden, hp.n_z, rng);
    m.update = make_mlp(hp.n_mu + hp.n_z, hp.hidden, hp.n_z, rng);
    m.classifier = make_mlp(hp.n_z, hp.hidden, 1, rng);
    std::vector<MessageKey> keys = vocabulary;
    std::sort(keys.begin(), keys.end());
    for (const auto& key : keys) {
        if (key.arity < 2) throw Error("gnn: message networks need arity >= 2");
        if (m.messages.count(key)) continue;
        m.messages.emplace(key, make_mlp(key.arity * hp.n_z, hp.hidden, key.arity * hp.n_mu, rng));
    }
    return m;
}

GnnModel zeros_like(const GnnModel& model) {
    GnnModel z = model;
    zero_mlp(z.embed);
    zero_mlp(z.update);
    zero_mlp(z.classifier);
    for (auto& [key, net] : z.messages) zero_mlp(net);
    return z;
}

std::vector<double> init_features(const FactoredNlp& graph, int n_f) {
    std::vector<double> x(static_cast<std::size_t>(graph.num_variables()) * static_cast<std::size_t>(n_f), 0.0);
    for (const auto& v : graph.variables()) {
        if (static_cast<int>(v.geometry.size()) > n_f - kVarClassSlots) {
            throw Error("init_features: geometry of variable " + std::to_string(v.id) + " overflows n_f = " +
                        std::to_string(n_f));
        }
        double* row = x.data() + static_cast<std::ptrdiff_t>(v.id) * n_f;
        row[static_cast<int>(v.class_tag)] = 1.0;
        std::copy(v.geometry.begin(), v.geometry.end(), row + kVarClassSlots);
    }
    return x;
}

std::vector<double> forward_logits(const GnnModel& model, const FactoredNlp& graph) {
    Prepared p = prepare(model, graph);
    Tape t;
    run_forward(model, p, t);
    return t.logits;
}

std::vector<double> forward(const GnnModel& model, const FactoredNlp& graph) {
    std::vector<double> s = forward_logits(model, graph);
    for (double& x : s) x = sigmoid(x);
    return s;
}

std::vector<std::vector<double>> round_messages(const GnnModel& model, const FactoredNlp& graph, int round) {
    if (round < 0 || round >= model.hyper.rounds) throw Error("round_messages: round out of range");
    Prepared p = prepare(model, graph);
    Tape t;
    run_forward(model, p, t);
    std::vector<std::vector<double>> out(static_cast<std::size_t>(graph.num_constraints()));
    const auto& R = t.rounds[static_cast<std::size_t>(round)];
    for (std::size_t gi = 0; gi < p.groups.size(); ++gi) {
        const auto& g = p.groups[gi];
        const std::size_t width = static_cast<std::size_t>(g.key.arity) * static_cast<std::size_t>(model.hyper.n_mu);
        for (std::size_t c = 0; c < g.constraints.size(); ++c) {
            out[static_cast<std::size_t>(g.constraints[c])].assign(R.out[gi].begin() + static_cast<std::ptrdiff_t>(c * width),
                                                                   R.out[gi].begin() + static_cast<std::ptrdiff_t>((c + 1) * width));
        }
    }
    return out;
}

double loss_from_logits(const std::vector<double>& logits, const std::vector<int>& labels, double pos_weight) {
    check_labels(labels, logits.size());
    if (logits.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        total += labels[i] ? softplus(-logits[i]) : pos_weight * softplus(logits[i]);
    }
    return total / static_cast<double>(logits.size());
}

double loss(const std::vector<double>& scores, const std::vector<int>& labels, double pos_weight) {
    check_labels(labels, scores.size());
    if (scores.empty()) return 0.0;
    constexpr double lo = 1e-15;
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double s = std::clamp(scores[i], lo, 1.0 - lo);
        total -= labels[i] ? std::log(s) : pos_weight * std::log1p(-s);
    }
    return total / static_cast<double>(scores.size());
}

double loss_and_gradient(const GnnModel& model, const FactoredNlp& graph, const std::vector<int>& labels,
                         double pos_weight, GnnModel& grad, double scale) {
    Prepared p = prepare(model, graph);
    check_labels(labels, static_cast<std::size_t>(p.n));
    if (p.n == 0) return 0.0;
    Tape t;
    run_forward(model, p, t);
    std::vector<double> dl(t.logits.size());
    for (std::size_t i = 0; i < dl.size(); ++i) {
        const double s = sigmoid(t.logits[i]);
        dl[i] = scale * (labels[i] ? s - 1.0 : pos_weight * s) / static_cast<double>(p.n);
    }
    run_backward(model, p, t, dl, grad);
    return loss_from_logits(t.logits, labels, pos_weight);
}

double grad_check(const GnnModel& model, const FactoredNlp& graph, const std::vector<int>& labels, double pos_weight,
                  int sample, std::uint64_t seed) {
    GnnModel m = model;
    GnnModel g = zeros_like(model);
    loss_and_gradient(m, graph, labels, pos_weight, g, 1.0);
    const Prepared p = prepare(m, graph);
    auto evaluate = [&](std::uint64_t& sig) {
        Tape t;
        run_forward(m, p, t);
        sig = activation_signature(t);
        return loss_from_logits(t.logits, labels, pos_weight);
    };
    std::uint64_t sig0 = 0;
    evaluate(sig0);

    auto mt = m.tensors();
    auto gt = g.tensors();
    std::vector<std::pair<std::size_t, std::size_t>> params;
    for (std::size_t ti = 0; ti < mt.size(); ++ti) {
        for (std::size_t k = 0; k < mt[ti].second->size(); ++k) params.emplace_back(ti, k);
    }
    if (sample > 0 && static_cast<std::size_t>(sample) < params.size()) {
        std::mt19937_64 rng(seed);
        std::shuffle(params.begin(), params.end(), rng);
        params.resize(static_cast<std::size_t>(sample));
    }
    const double h = 1e-6;
    double worst = 0.0;
    for (auto [ti, k] : params) {
        double& theta = (*mt[ti].second)[k];
        const double saved = theta;
        std::uint64_t sp = 0, sm = 0;
        theta = saved + h;
        const double lp = evaluate(sp);
        theta = saved - h;
        const double lm = evaluate(sm);
        theta = saved;
        if (sp != sig0 || sm != sig0) continue;
        const double numeric = (lp - lm) / (2 * h);
        const double analytic = (*gt[ti].second)[k];
        const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-5});
        worst = std::max(worst, rel);
    }
    return worst;
}

void accumulate(AccuracyPair& total, const std::vector<double>& scores, const std::vector<int>& labels, double delta) {
    check_labels(labels, scores.size());
    double hit_f = total.feasible * static_cast<double>(total.n_feasible) / 100.0;
    double hit_i = total.infeasible * static_cast<double>(total.n_infeasible) / 100.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i]) {
            ++total.n_feasible;
            hit_f += scores[i] >= delta;
        } else {
            ++total.n_infeasible;
            hit_i += scores[i] < delta;
        }
    }
    total.feasible = total.n_feasible ? 100.0 * hit_f / static_cast<double>(total.n_feasible) : 100.0;
    total.infeasible = total.n_infeasible ? 100.0 * hit_i / static_cast<double>(total.n_infeasible) : 100.0;
}

AccuracyPair accuracy(const std::vector<double>& scores, const std::vector<int>& labels, double delta) {
    AccuracyPair a;
    accumulate(a, scores, labels, delta);
    return a;
}

namespace {

struct Adam {
    GnnModel m, v;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;

    explicit Adam(const GnnModel& model) : m(zeros_like(model)), v(zeros_like(model)) {}

    void apply(GnnModel& model, GnnModel& grad, double lr) {
        ++step;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        auto pt = model.tensors();
        auto gt = grad.tensors();
        auto mt = m.tensors();
        auto vt = v.tensors();
        for (std::size_t t = 0; t < pt.size(); ++t) {
            auto& p = *pt[t].second;
            auto& g = *gt[t].second;
            auto& mm = *mt[t].second;
            auto& vv = *vt[t].second;
            for (std::size_t k = 0; k < p.size(); ++k) {
                mm[k] = beta1 * mm[k] + (1 - beta1) * g[k];
                vv[k] = beta2 * vv[k] + (1 - beta2) * g[k] * g[k];
                p[k] -= lr * (mm[k] / c1) / (std::sqrt(vv[k] / c2) + eps);
                g[k] = 0.0;
            }
        }
    }
};

}  // namespace

TrainResult train(const std::vector<LabeledInstance>& data, const GnnHyper& hyper, const TrainConfig& cfg) {
    if (data.empty()) throw Error("train: empty dataset");
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw Error("train: epochs and batch_size must be >= 1");
    if (cfg.validation_fraction < 0.0 || cfg.validation_fraction >= 1.0) {
        throw Error("train: validation_fraction must be in [0, 1)");
    }
    for (const auto& inst : data) check_labels(inst.labels, static_cast<std::size_t>(inst.graph.num_variables()));

    std::mt19937_64 rng(cfg.rng_seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(data.size())));
    if (cfg.validation_fraction > 0.0 && data.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

    std::vector<MessageKey> vocab;
    long ones = 0, zeros = 0;
    for (const auto& inst : data) {
        for (const auto& k : message_vocabulary(inst.graph)) vocab.push_back(k);
    }
    for (std::size_t i : tr) {
        for (int y : data[i].labels) (y ? ones : zeros)++;
    }
    TrainResult result;
    result.pos_weight = cfg.pos_weight > 0.0 ? cfg.pos_weight : (zeros > 0 ? static_cast<double>(ones) / static_cast<double>(zeros) : 1.0);
    std::uint64_t init_seed = rng();
    GnnModel model = make_model(hyper, vocab, init_seed);
    GnnModel grad = zeros_like(model);
    Adam adam(model);

    auto evaluate = [&](const std::vector<std::size_t>& idx, double& loss_out, AccuracyPair& acc) {
        double total = 0.0;
        long count = 0;
        for (std::size_t i : idx) {
            const auto logits = forward_logits(model, data[i].graph);
            total += loss_from_logits(logits, data[i].labels, result.pos_weight) * static_cast<double>(logits.size());
            count += static_cast<long>(logits.size());
            std::vector<double> s(logits.size());
            for (std::size_t k = 0; k < s.size(); ++k) s[k] = sigmoid(logits[k]);
            accumulate(acc, s, data[i].labels);
        }
        loss_out = count ? total / static_cast<double>(count) : 0.0;
    };

    double best = std::numeric_limits<double>::infinity();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(tr.begin(), tr.end(), rng);
        double epoch_loss = 0.0;
        long epoch_vars = 0;
        for (std::size_t b0 = 0; b0 < tr.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t b1 = std::min(tr.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
            long batch_vars = 0;
            for (std::size_t b = b0; b < b1; ++b) batch_vars += data[tr[b]].graph.num_variables();
            if (batch_vars == 0) continue;
            for (std::size_t b = b0; b < b1; ++b) {
                const auto& inst = data[tr[b]];
                const double nv = inst.graph.num_variables();
                const double l = loss_and_gradient(model, inst.graph, inst.labels, result.pos_weight, grad,
                                                   nv / static_cast<double>(batch_vars));
                epoch_loss += l * nv;
            }
            epoch_vars += batch_vars;
            adam.apply(model, grad, cfg.learning_rate);
        }
        EpochLog row;
        row.epoch = epoch;
        row.train_loss = epoch_vars ? epoch_loss / static_cast<double>(epoch_vars) : 0.0;
        if (!std::isfinite(row.train_loss)) throw Error("train: loss diverged at epoch " + std::to_string(epoch));
        AccuracyPair acc;
        evaluate(val.empty() ? tr : val, row.val_loss, acc);
        row.acc_feasible = acc.feasible;
        row.acc_infeasible = acc.infeasible;
        result.log.push_back(row);
        if (row.val_loss < best) {
            best = row.val_loss;
            result.best_epoch = epoch;
            result.model = model;
        }
    }
    if (result.best_epoch == 0) result.model = model;
    return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
    std::string out = "epoch,train_loss,val_loss,acc_feasible,acc_infeasible\n";
    char buf[160];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%.8f,%.8f,%.4f,%.4f\n", r.epoch, r.train_loss, r.val_loss, r.acc_feasible,
                      r.acc_infeasible);
        out += buf;
    }
    return out;
}

namespace {

constexpr char kMagic[8] = {'C', 'N', 'E', 'T', 'G', 'N', 'N', '1'};
constexpr std::uint32_t kModelVersion = 1;

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

struct Reader {
    std::string_view data;
    std::size_t pos = 0;

    template <class T>
    T get() {
        if (data.size() - pos < sizeof(T)) throw ParseError("model file truncated", static_cast<std::int64_t>(pos));
        T v;
        std::memcpy(&v, data.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
    std::string bytes(std::size_t n) {
        if (data.size() - pos < n) throw ParseError("model file truncated", static_cast<std::int64_t>(pos));
        std::string s(data.substr(pos, n));
        pos += n;
        return s;
    }
};

}  // namespace

std::string save_model(const GnnModel& model) {
    std::string out(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kModelVersion);
    const GnnHyper& h = model.hyper;
    for (int v : {h.n_f, h.n_z, h.n_mu, h.hidden, h.rounds}) put<std::int32_t>(out, v);
    const auto ts = model.tensors();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ts.size()));
    auto dims_of = [&](const std::string& name, std::size_t size) -> std::pair<std::uint32_t, std::uint32_t> {
        const std::string leaf = name.substr(name.rfind('.') + 1);
        const Mlp* m = nullptr;
        const std::string prefix = name.substr(0, name.rfind('.'));
        if (prefix == "embed") m = &model.embed;
        else if (prefix == "update") m = &model.update;
        else if (prefix == "classifier") m = &model.classifier;
        else {
            for (const auto& [key, net] : model.messages) {
                if ("msg." + std::string(to_string(key.kind)) + "." + std::to_string(key.arity) == prefix) m = &net;
            }
        }
        if (leaf == "w1") return {static_cast<std::uint32_t>(m->in), static_cast<std::uint32_t>(m->hidden)};
        if (leaf == "w2") return {static_cast<std::uint32_t>(m->hidden), static_cast<std::uint32_t>(m->out)};
        return {1u, static_cast<std::uint32_t>(size)};
    };
    for (const auto& [name, t] : ts) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        auto [rows, cols] = dims_of(name, t->size());
        put<std::uint32_t>(out, rows);
        put<std::uint32_t>(out, cols);
        for (double x : *t) put<double>(out, x);
    }
    return out;
}

GnnModel load_model(std::string_view bytes) {
    Reader r{bytes};
    if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw ParseError("not a model file", 0);
    const auto version = r.get<std::uint32_t>();
    if (version != kModelVersion) {
        throw ParseError("unsupported model version " + std::to_string(version), static_cast<std::int64_t>(r.pos - 4));
    }
    GnnModel m;
    m.hyper.n_f = r.get<std::int32_t>();
    m.hyper.n_z = r.get<std::int32_t>();
    m.hyper.n_mu = r.get<std::int32_t>();
    m.hyper.hidden = r.get<std::int32_t>();
    m.hyper.rounds = r.get<std::int32_t>();
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t at = r.pos;
        const auto len = r.get<std::uint32_t>();
        const std::string name = r.bytes(len);
        const auto rows = r.get<std::uint32_t>();
        const auto cols = r.get<std::uint32_t>();
        std::vector<double> values(static_cast<std::size_t>(rows) * cols);
        for (double& x : values) x = r.get<double>();

        const auto dot = name.rfind('.');
        if (dot == std::string::npos) throw ParseError("bad tensor name '" + name + "'", static_cast<std::int64_t>(at));
        const std::string prefix = name.substr(0, dot), leaf = name.substr(dot + 1);
        Mlp* net = nullptr;
        if (prefix == "embed") net = &m.embed;
        else if (prefix == "update") net = &m.update;
        else if (prefix == "classifier") net = &m.classifier;
        else if (prefix.rfind("msg.", 0) == 0) {
            const auto d2 = prefix.rfind('.');
            try {
                MessageKey key{kind_from_string(prefix.substr(4, d2 - 4)), std::stoi(prefix.substr(d2 + 1))};
                net = &m.messages[key];
            } catch (const std::exception&) {
                throw ParseError("bad message tensor '" + name + "'", static_cast<std::int64_t>(at));
            }
        } else {
            throw ParseError("unknown tensor '" + name + "'", static_cast<std::int64_t>(at));
        }
        if (leaf == "w1") {
            net->in = static_cast<int>(rows);
            net->hidden = static_cast<int>(cols);
            net->w1 = std::move(values);
        } else if (leaf == "b1") {
            net->b1 = std::move(values);
        } else if (leaf == "w2") {
            net->out = static_cast<int>(cols);
            net->w2 = std::move(values);
        } else if (leaf == "b2") {
            net->b2 = std::move(values);
        } else {
            throw ParseError("unknown tensor '" + name + "'", static_cast<std::int64_t>(at));
        }
    }
    if (r.pos != bytes.size()) throw ParseError("trailing bytes after model", static_cast<std::int64_t>(r.pos));

    const GnnHyper& h = m.hyper;
    auto check = [&](const Mlp& net, int in, int out, const std::string& what) {
        const bool ok = net.in == in && net.out == out && net.hidden == h.hidden &&
                        net.w1.size() == static_cast<std::size_t>(in) * static_cast<std::size_t>(h.hidden) &&
                        net.b1.size() == static_cast<std::size_t>(h.hidden) &&
                        net.w2.size() == static_cast<std::size_t>(h.hidden) * static_cast<std::size_t>(out) &&
                        net.b2.size() == static_cast<std::size_t>(out);
        if (!ok) throw ParseError("model arity mismatch in " + what, -1);
    };
    check(m.embed, h.n_f, h.n_z, "embed");
    check(m.update, h.n_mu + h.n_z, h.n_z, "update");
    check(m.classifier, h.n_z, 1, "classifier");
    for (const auto& [key, net] : m.messages) check(net, key.arity * h.n_z, key.arity * h.n_mu, "msg " + to_string(key));
    return m;
}

}  // namespace cnet
