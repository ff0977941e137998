#include "g2coflow/cli.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "g2coflow/errors.hpp"
#include "g2coflow/exterior.hpp"
#include "g2coflow/parallel.hpp"
#include "g2coflow/torsion.hpp"

namespace g2cf {

const char* to_string(RouteChoice r) {
    switch (r) {
        case RouteChoice::direct: return "direct";
        case RouteChoice::velocity: return "velocity";
        case RouteChoice::both: return "both";
    }
    return "?";
}

const char* to_string(InitKind k) {
    return k == InitKind::flat ? "flat" : "perturbation";
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> fields(const std::string& v) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < v.size()) {
        while (i < v.size() && (v[i] == ' ' || v[i] == '\t')) ++i;
        size_t j = i;
        while (j < v.size() && v[j] != ' ' && v[j] != '\t') ++j;
        if (j > i) out.push_back(v.substr(i, j - i));
        i = j;
    }
    return out;
}

[[noreturn]] void key_error(int line, const std::string& key,
                            const std::string& why) {
    throw Error(ErrorCode::parse_error, "line " + std::to_string(line) +
                                            ": key '" + key + "' " + why);
}

[[noreturn]] void cfg_error(const std::string& what) {
    throw Error(ErrorCode::config_error, what);
}

double number(const std::string& tok, int line, const std::string& key) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
        key_error(line, key, "has a malformed number '" + tok + "'");
    return v;
}

int64_t integer(const std::string& tok, int line, const std::string& key) {
    int64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
        key_error(line, key, "has a malformed integer '" + tok + "'");
    return v;
}

uint64_t uinteger(const std::string& tok, int line, const std::string& key) {
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
        key_error(line, key, "has a malformed integer '" + tok + "'");
    return v;
}

/// perturbed axes: the explicit list, or every active grid axis
std::vector<int> perturb_axes(const RunConfig& cfg) {
    if (!cfg.axes.empty()) return cfg.axes;
    std::vector<int> out;
    for (int a = 0; a < 7; ++a)
        if (cfg.dims[a] > 1) out.push_back(a);
    return out;
}

void validate(RunConfig& cfg, bool have_dims, bool have_t_end) {
    char buf[160];
    if (!have_dims) cfg_error("required key dims is missing");
    for (int a = 0; a < 7; ++a)
        if (cfg.dims[a] < 1) cfg_error("dims entries must be >= 1");
    for (int a = 0; a < 7; ++a)
        if (!(cfg.lengths[a] > 0.0)) cfg_error("lengths entries must be positive");
    if (!have_t_end) cfg_error("required key t_end is missing");
    if (!(cfg.t_end > 0.0)) cfg_error("t_end must be positive");
    if (!(cfg.a > 0.0))
        cfg_error("the flow constant a must be positive (the modified flow "
                  "is parabolic only for positive a)");
    if (cfg.scheme == Scheme::spectral)
        for (int a = 0; a < 7; ++a)
            if (cfg.dims[a] > 1 && cfg.dims[a] % 2 != 0) {
                std::snprintf(buf, sizeof buf,
                              "spectral differentiation needs an even node "
                              "count; axis %d has %d",
                              a, cfg.dims[a]);
                cfg_error(buf);
            }
    if (cfg.kmax < 0 || cfg.kmax > 4) cfg_error("kmax must lie in [0, 4]");
    if (cfg.dt < 0.0) cfg_error("dt must be >= 0");
    if (!(cfg.c_cfl > 0.0)) cfg_error("c_cfl must be positive");
    if (cfg.monitor_every < 1) cfg_error("monitor_every must be >= 1");
    if (cfg.checkpoint_every < 0) cfg_error("checkpoint_every must be >= 0");
    if (cfg.workers < 0) cfg_error("workers must be >= 0");
    if (!(cfg.max_amplitude > 0.0)) cfg_error("max_amplitude must be positive");
    if (!(cfg.coclosed_threshold > 0.0))
        cfg_error("coclosed_threshold must be positive");
    if (cfg.shi_time < 0.0 || cfg.shi_time > cfg.t_end)
        cfg_error("shi_time must lie within [0, t_end]");
    if (cfg.init == InitKind::perturbation) {
        if (!cfg.seed_set)
            cfg_error("perturbation initial data requires an explicit seed");
        if (!(cfg.amplitude > 0.0)) cfg_error("amplitude must be positive");
        if (cfg.amplitude > cfg.max_amplitude) {
            std::snprintf(buf, sizeof buf,
                          "amplitude %g exceeds the positivity safety bound "
                          "max_amplitude = %g",
                          cfg.amplitude, cfg.max_amplitude);
            cfg_error(buf);
        }
        for (int a : cfg.axes)
            if (a < 0 || a > 6 || cfg.dims[a] < 2) {
                std::snprintf(buf, sizeof buf,
                              "axes entry %d is not an active grid axis", a);
                cfg_error(buf);
            }
        std::vector<int> axes = perturb_axes(cfg);
        if (axes.empty()) cfg_error("axes: the grid has no active axis to perturb");
        if (cfg.modes.empty()) cfg_error("modes must list at least one mode");
        for (int m : cfg.modes)
            for (int a : axes)
                if (m < 1 || 2 * m >= cfg.dims[a]) {
                    std::snprintf(buf, sizeof buf,
                                  "mode %d is outside the resolvable band "
                                  "(axis %d has %d nodes)",
                                  m, a, cfg.dims[a]);
                    cfg_error(buf);
                }
    }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::set<std::string> seen;
    bool have_dims = false, have_t_end = false;
    int lineno = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos
                                                ? std::string::npos
                                                : nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::parse_error,
                        "line " + std::to_string(lineno) +
                            ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw Error(ErrorCode::parse_error,
                        "line " + std::to_string(lineno) + ": empty key");
        if (!seen.insert(key).second)
            key_error(lineno, key, "appears twice");
        std::vector<std::string> toks = fields(val);
        auto one = [&]() -> const std::string& {
            if (toks.size() != 1) key_error(lineno, key, "expects one value");
            return toks[0];
        };

        if (key == "dims") {
            if (toks.size() != 7) key_error(lineno, key, "expects 7 values");
            for (int a = 0; a < 7; ++a)
                cfg.dims[a] = int(integer(toks[a], lineno, key));
            have_dims = true;
        } else if (key == "lengths") {
            if (toks.size() != 7) key_error(lineno, key, "expects 7 values");
            for (int a = 0; a < 7; ++a)
                cfg.lengths[a] = number(toks[a], lineno, key);
        } else if (key == "scheme") {
            const std::string& v = one();
            if (v == "spectral") cfg.scheme = Scheme::spectral;
            else if (v == "fd4") cfg.scheme = Scheme::fd4;
            else key_error(lineno, key, "has unknown value '" + v + "'");
        } else if (key == "route") {
            const std::string& v = one();
            if (v == "direct") cfg.route = RouteChoice::direct;
            else if (v == "velocity") cfg.route = RouteChoice::velocity;
            else if (v == "both") cfg.route = RouteChoice::both;
            else key_error(lineno, key, "has unknown value '" + v + "'");
        } else if (key == "a") {
            cfg.a = number(one(), lineno, key);
        } else if (key == "t_end") {
            cfg.t_end = number(one(), lineno, key);
            have_t_end = true;
        } else if (key == "dt") {
            cfg.dt = number(one(), lineno, key);
        } else if (key == "c_cfl") {
            cfg.c_cfl = number(one(), lineno, key);
        } else if (key == "kmax") {
            cfg.kmax = int(integer(one(), lineno, key));
        } else if (key == "init") {
            const std::string& v = one();
            if (v == "flat") cfg.init = InitKind::flat;
            else if (v == "perturbation") cfg.init = InitKind::perturbation;
            else key_error(lineno, key, "has unknown value '" + v + "'");
        } else if (key == "amplitude") {
            cfg.amplitude = number(one(), lineno, key);
        } else if (key == "modes") {
            cfg.modes.clear();
            for (const std::string& t : toks)
                cfg.modes.push_back(int(integer(t, lineno, key)));
        } else if (key == "axes") {
            cfg.axes.clear();
            for (const std::string& t : toks)
                cfg.axes.push_back(int(integer(t, lineno, key)));
        } else if (key == "seed") {
            cfg.seed = uinteger(one(), lineno, key);
            cfg.seed_set = true;
        } else if (key == "max_amplitude") {
            cfg.max_amplitude = number(one(), lineno, key);
        } else if (key == "shi_time") {
            cfg.shi_time = number(one(), lineno, key);
        } else if (key == "monitors") {
            cfg.monitors.clear();
            for (const std::string& t : toks) {
                if (t != "shi" && t != "evolution" && t != "commutator")
                    key_error(lineno, key, "has unknown monitor '" + t + "'");
                cfg.monitors.push_back(t);
            }
        } else if (key == "monitor_every") {
            cfg.monitor_every = integer(one(), lineno, key);
        } else if (key == "series_out") {
            cfg.series_out = val;
        } else if (key == "report_out") {
            cfg.report_out = val;
        } else if (key == "shi_out") {
            cfg.shi_out = val;
        } else if (key == "checkpoint_out") {
            cfg.checkpoint_out = val;
        } else if (key == "checkpoint_every") {
            cfg.checkpoint_every = integer(one(), lineno, key);
        } else if (key == "workers") {
            cfg.workers = int(integer(one(), lineno, key));
        } else if (key == "coclosed_threshold") {
            cfg.coclosed_threshold = number(one(), lineno, key);
        } else {
            throw Error(ErrorCode::parse_error,
                        "line " + std::to_string(lineno) + ": unknown key '" +
                            key + "'");
        }
    }
    validate(cfg, have_dims, have_t_end);
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::io_error, "cannot read config '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return parse_config(text);
}

DerivOps make_ops(const RunConfig& cfg) {
    Grid g;
    g.dims = cfg.dims;
    g.lengths = cfg.lengths;
    return DerivOps(g, cfg.scheme);
}

namespace {

struct Mix {
    uint64_t state;
    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }
    double sym() { return 2.0 * uniform() - 1.0; }
};

/// Band-limited 3-form with prescribed modes along the chosen axes plus one
/// product wave per axis pair.  All draws happen before the node loop, so the
/// continuum field does not depend on the grid resolution.
TensorField band_form(const Grid& g, const std::vector<int>& axes,
                      const std::vector<int>& modes, uint64_t seed,
                      double amp) {
    TensorField f = form_field(g, 3);
    Mix rng{seed};
    constexpr double tau = 6.283185307179586476925;
    struct Wave {
        int axis, mode;
        double a, b;
    };
    struct Cross {
        int ax1, ax2, m1, m2;
        double a, p1, p2;
    };
    int nc = int(f.comps());
    for (int c = 0; c < nc; ++c) {
        std::vector<Wave> waves;
        std::vector<Cross> crosses;
        for (int ax : axes)
            for (int m : modes)
                waves.push_back({ax, m, amp * rng.sym(), amp * rng.sym()});
        for (size_t i = 0; i < axes.size(); ++i)
            for (size_t j = i + 1; j < axes.size(); ++j)
                crosses.push_back({axes[i], axes[j],
                                   modes[rng.next() % modes.size()],
                                   modes[rng.next() % modes.size()],
                                   amp * rng.sym(), tau * rng.uniform(),
                                   tau * rng.uniform()});
        for (int64_t n = 0; n < g.nodes(); ++n) {
            auto co = g.coords(n);
            double v = 0.0;
            for (const Wave& w : waves) {
                double x = tau * w.mode * co[w.axis] / g.dims[w.axis];
                v += w.a * std::sin(x) + w.b * std::cos(x);
            }
            for (const Cross& x : crosses) {
                double x1 = tau * x.m1 * co[x.ax1] / g.dims[x.ax1] + x.p1;
                double x2 = tau * x.m2 * co[x.ax2] / g.dims[x.ax2] + x.p2;
                v += x.a * std::sin(x1) * std::cos(x2);
            }
            f.node(n)[c] = v;
        }
    }
    return f;
}

bool positive_everywhere(const TensorField& psi) {
    const PointForm& guess = standard_phi();
    for (int64_t n = 0; n < psi.grid.nodes(); ++n) {
        PointForm p = form_at(psi, n);
        if (!phi_from_psi(p, guess, 1e-12, 60)) return false;
    }
    return true;
}

}  // namespace

TensorField build_initial(const RunConfig& cfg, const DerivOps& ops) {
    const Grid& g = ops.grid;
    TensorField psi = constant_form_field(g, standard_psi());
    if (cfg.init == InitKind::flat) return psi;

    std::vector<int> axes = perturb_axes(cfg);
    auto assemble = [&](double amp) {
        TensorField beta = band_form(g, axes, cfg.modes, cfg.seed, amp);
        TensorField out = exterior_d(beta, ops);
        axpy(out, 1.0, psi);
        return out;
    };
    TensorField out = assemble(cfg.amplitude);
    double res = coclosed_residual(out, ops);
    if (res > cfg.coclosed_threshold) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "initial data misses coclosedness: sup |d psi| = %.3g "
                      "exceeds %.3g",
                      res, cfg.coclosed_threshold);
        throw Error(ErrorCode::not_coclosed, buf);
    }
    if (positive_everywhere(out)) return out;

    // the requested amplitude left the cone: bisect the largest amplitude of
    // the same draw that stays positive, and put it in the error message
    double lo = 0.0, hi = cfg.amplitude;
    for (int it = 0; it < 40; ++it) {
        double mid = 0.5 * (lo + hi);
        if (positive_everywhere(assemble(mid)))
            lo = mid;
        else
            hi = mid;
    }
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "perturbation amplitude %g leaves the positive 3-form cone; "
                  "the largest safe amplitude for this seed is about %.3g",
                  cfg.amplitude, lo);
    throw Error(ErrorCode::not_positive, buf);
}

// ---------------------------------------------------------------------------
// checkpoint serialization

namespace {

constexpr char kMagic[8] = {'G', '2', 'C', 'F', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCkptVersion = 1;

void put_u32(std::string& o, uint32_t v) {
    for (int i = 0; i < 4; ++i) o.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& o, uint64_t v) {
    for (int i = 0; i < 8; ++i) o.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& o, double v) {
    put_u64(o, std::bit_cast<uint64_t>(v));
}

void put_f64s(std::string& o, const double* p, size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        o.append(reinterpret_cast<const char*>(p), n * sizeof(double));
    } else {
        for (size_t i = 0; i < n; ++i) put_f64(o, p[i]);
    }
}

uint64_t fnv1a(const unsigned char* p, size_t n) {
    uint64_t h = 14695981039346656037ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

struct Reader {
    const std::string& b;
    size_t pos = 0;
    // the seal has already vouched for the bytes; a short read here means a
    // correctly sealed but structurally bogus file
    void need(size_t n) {
        if (pos + n > b.size())
            throw Error(ErrorCode::io_error, "malformed checkpoint");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= uint32_t(uint8_t(b[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= uint64_t(uint8_t(b[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    int64_t i64() { return std::bit_cast<int64_t>(u64()); }
    double f64() { return std::bit_cast<double>(u64()); }
    void f64s(double* p, size_t n) {
        need(n * sizeof(double));
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(p, b.data() + pos, n * sizeof(double));
            pos += n * sizeof(double);
        } else {
            for (size_t i = 0; i < n; ++i) p[i] = f64();
        }
    }
};

void ensure_parent(const std::string& path) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(path).parent_path();
    if (!dir.empty()) {
        std::error_code ec;
        fs::create_directories(dir, ec);
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    if (c.version != kCkptVersion)
        throw Error(ErrorCode::invalid_argument,
                    "can only write checkpoint format version 1");
    int64_t nodes = 1;
    for (int d : c.dims) {
        if (d < 1)
            throw Error(ErrorCode::invalid_argument, "checkpoint dims invalid");
        nodes *= d;
    }
    size_t per = size_t(nodes) * 35;
    if (c.psi.data.size() != per || c.phi.data.size() != per ||
        (c.has_secondary &&
         (c.psi2.data.size() != per || c.phi2.data.size() != per)))
        throw Error(ErrorCode::invalid_argument,
                    "checkpoint payload does not match its dims");

    std::string o;
    o.reserve(172 + per * 8 * (c.has_secondary ? 4 : 2));
    o.append(kMagic, 8);
    put_u32(o, c.version);
    put_u32(o, c.has_secondary ? 1u : 0u);
    put_u32(o, uint32_t(c.route));
    put_u32(o, uint32_t(c.scheme));
    for (int d : c.dims) put_u32(o, uint32_t(d));
    for (double l : c.lengths) put_f64(o, l);
    put_f64(o, c.t);
    put_f64(o, c.a);
    put_f64(o, c.dt);
    put_u64(o, std::bit_cast<uint64_t>(c.step));
    put_u64(o, std::bit_cast<uint64_t>(nodes));
    put_f64s(o, c.psi.data.data(), per);
    put_f64s(o, c.phi.data.data(), per);
    if (c.has_secondary) {
        put_f64s(o, c.psi2.data.data(), per);
        put_f64s(o, c.phi2.data.data(), per);
    }
    put_u64(o, fnv1a(reinterpret_cast<const unsigned char*>(o.data()),
                     o.size()));

    ensure_parent(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorCode::io_error,
                    "cannot write checkpoint '" + path + "'");
    out.write(o.data(), std::streamsize(o.size()));
    out.flush();
    if (!out)
        throw Error(ErrorCode::io_error,
                    "cannot write checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::io_error,
                    "cannot read checkpoint '" + path + "'");
    std::string b((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
    if (b.size() < 20 || std::memcmp(b.data(), kMagic, 8) != 0)
        throw Error(ErrorCode::io_error,
                    "'" + path + "' is not a checkpoint (bad magic)");
    Reader r{b, 8};
    uint32_t version = r.u32();
    if (version != kCkptVersion) {
        char buf[96];
        std::snprintf(buf, sizeof buf,
                      "checkpoint format version %u, this build reads %u",
                      version, kCkptVersion);
        throw Error(ErrorCode::version_mismatch, buf);
    }
    uint64_t seal = fnv1a(reinterpret_cast<const unsigned char*>(b.data()),
                          b.size() - 8);
    uint64_t stored = 0;
    for (int i = 0; i < 8; ++i)
        stored |= uint64_t(uint8_t(b[b.size() - 8 + i])) << (8 * i);
    if (seal != stored)
        throw Error(ErrorCode::checksum_mismatch,
                    "checkpoint checksum mismatch (truncated or corrupted "
                    "file)");

    Checkpoint c;
    c.version = version;
    uint32_t flags = r.u32();
    uint32_t route = r.u32();
    uint32_t scheme = r.u32();
    if (route > 2 || scheme > 1 || flags > 1)
        throw Error(ErrorCode::io_error, "malformed checkpoint");
    c.route = RouteChoice(route);
    c.scheme = Scheme(scheme);
    c.has_secondary = flags & 1;
    Grid g;
    for (int a = 0; a < 7; ++a) {
        c.dims[a] = int(r.u32());
        if (c.dims[a] < 1)
            throw Error(ErrorCode::io_error, "malformed checkpoint");
    }
    for (int a = 0; a < 7; ++a) c.lengths[a] = r.f64();
    c.t = r.f64();
    c.a = r.f64();
    c.dt = r.f64();
    c.step = r.i64();
    int64_t nodes = r.i64();
    g.dims = c.dims;
    g.lengths = c.lengths;
    if (nodes != g.nodes())
        throw Error(ErrorCode::io_error, "malformed checkpoint");
    size_t per = size_t(nodes) * 35;
    c.psi = form_field(g, 4);
    c.phi = form_field(g, 3);
    r.f64s(c.psi.data.data(), per);
    r.f64s(c.phi.data.data(), per);
    if (c.has_secondary) {
        c.psi2 = form_field(g, 4);
        c.phi2 = form_field(g, 3);
        r.f64s(c.psi2.data.data(), per);
        r.f64s(c.phi2.data.data(), per);
    }
    if (r.pos != b.size() - 8)
        throw Error(ErrorCode::io_error, "malformed checkpoint");
    return c;
}

// ---------------------------------------------------------------------------
// the driver loop

namespace {

std::string fmt(double v) {
    char buf[40];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

struct WorkerGuard {
    int prev;
    explicit WorkerGuard(int n) : prev(worker_count()) { set_worker_count(n); }
    ~WorkerGuard() { set_worker_count(prev); }
};

double route_rate_sup(const FlowState& s, Route r, const DerivOps& ops) {
    if (r == Route::direct) return psi_rate_direct(s, ops).sup_abs();
    return velocity(s, ops).psi_rate.sup_abs();
}

double sup_gap(const TensorField& a, const TensorField& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

struct RowData {
    MonitorRow mon;
    double lambda = 0.0;
    double agg_phi = 0.0;
    double agg_psi = 0.0;
    ShiSequences seq;
};

RowData make_row(const FlowState& s, const DerivOps& ops, int64_t step,
                 double dts, Route prim, int kmax_row, double a_const) {
    RowData r;
    double sr = route_rate_sup(s, prim, ops);
    r.mon = monitor_row(s, ops, step, dts, sr);
    r.lambda = lambda_field(s.cache, ops).sup;
    r.seq = shi_sequences(s.psi, s.cache, ops, s.t, kmax_row);
    AggregateQuantities ag = aggregates(r.seq, a_const);
    r.agg_phi = ag.total;
    r.agg_psi = ag.tilde_total_k1;
    return r;
}

struct Series {
    std::ofstream out;
    bool both = false;
    bool on = false;
    void open(const std::string& path, bool both_) {
        if (path.empty()) return;
        ensure_parent(path);
        out.open(path, std::ios::trunc);
        if (!out)
            throw Error(ErrorCode::io_error,
                        "cannot write series file '" + path + "'");
        both = both_;
        on = true;
        out << "step,t,dt,sup_dpsi,lambda_sup,sup_torsion,min_eig,"
               "star_residual,sup_rate,agg_phi,agg_psi";
        if (both) out << ",route_gap";
        out << ",wall_s\n";
        out.flush();
    }
    void row(const RowData& r, double gap, double wall) {
        if (!on) return;
        out << r.mon.step << ',' << fmt(r.mon.t) << ',' << fmt(r.mon.dt) << ','
            << fmt(r.mon.coclosed) << ',' << fmt(r.lambda) << ','
            << fmt(r.mon.sup_torsion) << ',' << fmt(r.mon.min_eig) << ','
            << fmt(r.mon.star_residual) << ',' << fmt(r.mon.sup_rate) << ','
            << fmt(r.agg_phi) << ',' << fmt(r.agg_psi);
        if (both) out << ',' << fmt(gap);
        out << ',' << fmt(wall) << '\n';
        out.flush();  // partial series survive an abort
    }
};

struct LadderFile {
    std::ofstream out;
    bool on = false;
    void open(const std::string& path) {
        ensure_parent(path);
        out.open(path, std::ios::trunc);
        if (!out)
            throw Error(ErrorCode::io_error,
                        "cannot write ladder file '" + path + "'");
        on = true;
        out << "t,k,a,a_ok,b,b_ok,c,c_ok,d,d_ok\n";
    }
    void add(const ShiSequences& s) {
        if (!on) return;
        auto ok = [](const ShiEntry& e) { return (e.valid && !e.noise) ? 1 : 0; };
        for (int k = 0; k <= s.kmax; ++k) {
            out << fmt(s.t) << ',' << k << ',' << fmt(s.a[k].value) << ','
                << ok(s.a[k]) << ',' << fmt(s.b[k].value) << ',' << ok(s.b[k])
                << ',' << fmt(s.c[k].value) << ',' << ok(s.c[k]) << ','
                << fmt(s.d[k].value) << ',' << ok(s.d[k]) << '\n';
        }
        out.flush();
    }
};

bool wants(const RunConfig& cfg, const char* name) {
    for (const std::string& m : cfg.monitors)
        if (m == name) return true;
    return false;
}

std::string describe_init(const RunConfig& cfg) {
    if (cfg.init == InitKind::flat) return "flat";
    std::string s = "perturbation (amplitude " + fmt(cfg.amplitude) +
                    ", seed " + std::to_string(cfg.seed) + ", modes";
    for (int m : cfg.modes) s += " " + std::to_string(m);
    s += ", axes";
    for (int a : perturb_axes(cfg)) s += " " + std::to_string(a);
    s += ")";
    return s;
}

RunArtifacts drive(const RunConfig& cfg, const Checkpoint* from) {
    WorkerGuard workers(cfg.workers);
    DerivOps ops = make_ops(cfg);
    RunArtifacts art;
    bool both = cfg.route == RouteChoice::both;
    Route prim = cfg.route == RouteChoice::velocity ? Route::velocity
                                                    : Route::direct;
    StepControls ctrl_p{prim, TimeScheme::rk4, cfg.coclosed_threshold, 1e-10};
    StepControls ctrl_s{Route::velocity, TimeScheme::rk4,
                        cfg.coclosed_threshold, 1e-10};

    FlowState primary;
    std::optional<FlowState> secondary;
    double dt = 0.0;
    int64_t step0 = 0;
    if (from) {
        if (from->dims != cfg.dims)
            cfg_error("checkpoint grid does not match the config");
        for (int a = 0; a < 7; ++a)
            if (from->lengths[a] != cfg.lengths[a])
                cfg_error("checkpoint lengths do not match the config");
        if (from->scheme != cfg.scheme || from->route != cfg.route)
            cfg_error("checkpoint scheme/route do not match the config");
        if (from->a != cfg.a)
            cfg_error("checkpoint flow constant does not match the config");
        if (cfg.dt > 0.0 && cfg.dt != from->dt)
            cfg_error("config dt differs from the checkpointed fixed step");
        if (from->has_secondary != both)
            cfg_error("checkpoint route payload does not match the config");
        if (from->t >= cfg.t_end)
            cfg_error("checkpoint is already at or past t_end");
        primary.psi = from->psi;
        primary.t = from->t;
        primary.a = from->a;
        primary.cache = refresh_geometry(primary.psi, from->phi, ops);
        if (both) {
            FlowState s;
            s.psi = from->psi2;
            s.t = from->t;
            s.a = from->a;
            s.cache = refresh_geometry(s.psi, from->phi2, ops);
            secondary = std::move(s);
        }
        dt = from->dt;
        step0 = from->step;
    } else {
        TensorField psi0 = build_initial(cfg, ops);
        primary = make_state(psi0, 0.0, cfg.a, ops);
        if (both) secondary = make_state(std::move(psi0), 0.0, cfg.a, ops);
        dt = cfg.dt > 0.0 ? cfg.dt : suggested_dt(primary, ops, cfg.c_cfl);
        step0 = 0;
    }
    art.dt = dt;

    // fixed schedule: full steps of dt, with the last one landing on t_end
    double q = cfg.t_end / dt;
    int64_t n_total = llround(q);
    if (n_total < 1 || std::fabs(q - double(n_total)) > 1e-9)
        n_total = int64_t(std::ceil(q - 1e-12));
    if (n_total < 1) n_total = 1;
    if (step0 >= n_total)
        cfg_error("checkpoint is already at or past the planned schedule");

    bool shi_on = wants(cfg, "shi");
    bool evo_on = wants(cfg, "evolution");
    bool comm_on = wants(cfg, "commutator");
    int kmax_row = std::min(cfg.kmax, 2);

    Series series;
    series.open(cfg.series_out, both);
    LadderFile ladder_file;
    if (shi_on && !cfg.shi_out.empty()) ladder_file.open(cfg.shi_out);

    auto wall0 = std::chrono::steady_clock::now();
    auto wall = [&] {
        return std::chrono::duration<double>(
                   std::chrono::steady_clock::now() - wall0)
            .count();
    };

    std::vector<FlowState> evo_win;
    bool evo_frozen = false;
    bool sample_taken = false;
    RowData first_row, last_row;
    bool have_first = false;
    int64_t last_emitted = step0 - 1;

    auto emit = [&](int64_t k, double dts, bool final_row) {
        bool is_sample =
            shi_on && !sample_taken && primary.t > 0.0 &&
            (cfg.shi_time > 0.0 ? primary.t >= cfg.shi_time - 1e-12
                                : final_row);
        int depth = is_sample ? cfg.kmax : kmax_row;
        RowData r = make_row(primary, ops, k, dts, prim, depth, cfg.a);
        double gap = secondary ? sup_gap(primary.psi, secondary->psi) : 0.0;
        series.row(r, gap, wall());
        if (shi_on && primary.t > 0.0) {
            art.ladders.push_back(r.seq);
            ladder_file.add(r.seq);
            if (is_sample) {
                art.sample = r.seq;
                art.have_sample = true;
                sample_taken = true;
            }
        }
        if (!have_first) {
            first_row = r;
            have_first = true;
        }
        last_row = r;
        art.final_gap = gap;
        last_emitted = k;
    };

    emit(step0, from ? dt : 0.0, step0 == n_total);
    if (evo_on) evo_win.push_back(primary);

    auto snapshot = [&](int64_t stepv) {
        Checkpoint c;
        c.route = cfg.route;
        c.scheme = cfg.scheme;
        c.dims = cfg.dims;
        c.lengths = cfg.lengths;
        c.t = primary.t;
        c.a = primary.a;
        c.dt = dt;
        c.step = stepv;
        c.psi = primary.psi;
        c.phi = primary.cache.phi;
        if (secondary) {
            c.has_secondary = true;
            c.psi2 = secondary->psi;
            c.phi2 = secondary->cache.phi;
        }
        return c;
    };

    int64_t k = step0;
    for (k = step0 + 1; k <= n_total; ++k) {
        double dts = (k == n_total) ? (cfg.t_end - primary.t) : dt;
        if (dts <= 0.0) break;
        FlowState saved = primary;
        std::optional<FlowState> saved2 = secondary;
        try {
            step(primary, dts, ctrl_p, ops);
            if (secondary) step(*secondary, dts, ctrl_s, ops);
        } catch (const Error& e) {
            primary = std::move(saved);  // keep the last good state
            secondary = std::move(saved2);
            art.aborted = true;
            art.abort_code = e.code();
            art.abort_message =
                std::string(e.what()) + " (step " + std::to_string(k) + ")";
            break;
        }
        if (evo_on && !evo_frozen) {
            if (dts == dt) {
                evo_win.push_back(primary);
                if (evo_win.size() > 5) evo_win.erase(evo_win.begin());
            } else {
                evo_frozen = true;
            }
        }
        if (k % cfg.monitor_every == 0 || k == n_total)
            emit(k, dts, k == n_total);
        if (!cfg.checkpoint_out.empty() && cfg.checkpoint_every > 0 &&
            k % cfg.checkpoint_every == 0)
            save_checkpoint(cfg.checkpoint_out + "." + std::to_string(k),
                            snapshot(k));
    }
    int64_t done = art.aborted ? k - 1 : n_total;
    art.steps = done;
    if (art.aborted && done != last_emitted) emit(done, dt, false);
    if (!cfg.checkpoint_out.empty()) save_checkpoint(cfg.checkpoint_out,
                                                     snapshot(done));

    if (evo_on && evo_win.size() >= 3) {
        try {
            art.evo = evolution_monitors(evo_win, ops);
            art.have_evo = true;
        } catch (const Error&) {
        }
    }
    std::string fit_note;
    if (shi_on && !art.ladders.empty()) {
        try {
            art.fit = fit_analyticity(art.ladders);
            art.have_fit = true;
        } catch (const Error& e) {
            fit_note = e.what();
        }
    }
    bool have_comm = false;
    CommutatorReport comm;
    if (comm_on) {
        try {
            comm = commutator_monitor(primary.cache.torsion.t, primary.cache.m,
                                      primary.cache.conn, primary.cache.curv,
                                      ops, 1);
            have_comm = true;
        } catch (const Error&) {
        }
    }

    // report
    if (!cfg.report_out.empty()) {
        std::string rep;
        auto line = [&](int indent, const std::string& s) {
            rep.append(size_t(indent) * 2, ' ');
            rep += s;
            rep += '\n';
        };
        line(0, "coflow run");
        if (art.aborted)
            line(1, std::string("status: aborted (") +
                        to_string(art.abort_code) + ": " + art.abort_message +
                        ")");
        else
            line(1, "status: completed");
        line(1, "config");
        {
            std::string d = "dims =";
            for (int v : cfg.dims) d += " " + std::to_string(v);
            line(2, d);
            std::string l = "lengths =";
            for (double v : cfg.lengths) l += " " + fmt(v);
            line(2, l);
            line(2, std::string("scheme = ") + to_string(cfg.scheme) +
                        "   route = " + to_string(cfg.route) +
                        "   a = " + fmt(cfg.a));
            line(2, "t_end = " + fmt(cfg.t_end) + "   dt = " + fmt(dt) +
                        "   planned steps = " + std::to_string(n_total));
            line(2, "init = " + describe_init(cfg));
            line(2, "kmax = " + std::to_string(cfg.kmax));
        }
        line(1, "run");
        line(2, "steps completed = " + std::to_string(done) +
                    (from ? " (resumed at " + std::to_string(step0) + ")"
                          : ""));
        line(2, "final t = " + fmt(primary.t));
        line(2, "sup dpsi = " + fmt(last_row.mon.coclosed) +
                    "   sup torsion = " + fmt(last_row.mon.sup_torsion));
        line(2, "min eig = " + fmt(last_row.mon.min_eig) +
                    "   lambda sup = " + fmt(last_row.lambda));
        line(2, "star residual = " + fmt(last_row.mon.star_residual));
        if (both) line(2, "route gap = " + fmt(art.final_gap));
        if (shi_on && art.have_sample) {
            line(1, "ladders (t = " + fmt(art.sample.t) + ")");
            for (int kk = 0; kk <= art.sample.kmax; ++kk) {
                char buf[200];
                std::snprintf(buf, sizeof buf,
                              "k = %d   a = %s   b = %s   c = %s   d = %s", kk,
                              fmt(art.sample.a[kk].value).c_str(),
                              fmt(art.sample.b[kk].value).c_str(),
                              fmt(art.sample.c[kk].value).c_str(),
                              fmt(art.sample.d[kk].value).c_str());
                line(2, buf);
            }
            AggregateQuantities ag = aggregates(art.sample, cfg.a);
            line(2, "aggregates: phi = " + fmt(ag.total) +
                        "   tilde(k>=1) = " + fmt(ag.tilde_total_k1) +
                        "   tilde(k>=0) = " + fmt(ag.tilde_total_k0));
            if (art.have_fit) {
                if (art.fit.degenerate)
                    line(2, "fit: degenerate ladder (C = 0)");
                else
                    line(2, "fit: C = " + fmt(art.fit.c_fit) +
                                "   L = " + fmt(art.fit.l_fit) + "   depth = " +
                                std::to_string(art.fit.kmax_used) +
                                (art.fit.consistent ? "   consistent"
                                                    : "   inconsistent"));
            } else {
                line(2, "fit: unavailable (" + fit_note + ")");
            }
            if (art.have_fit && !art.fit.degenerate && have_first) {
                double m0 = std::sqrt(first_row.lambda);
                double k0 = 5376.0 * (m0 + cfg.a + 1.0) * (m0 + cfg.a + 1.0);
                double window =
                    1.0 / (4.0 * (art.fit.c_fit + 1.0) * (k0 * k0) * (k0 * k0));
                line(2, "envelope: start = " + fmt(k0) +
                            "   window = " + fmt(window));
            }
        }
        if (art.have_evo) {
            line(1, "evolution");
            line(2, "metric residual = " + fmt(art.evo.metric_residual) +
                        "   at 2dt = " + fmt(art.evo.metric_residual_2dt) +
                        "   order = " + fmt(art.evo.metric_order));
            line(2, std::string("heat constant = ") + fmt(art.evo.heat_chat) +
                        (art.evo.heat_rhs_covers ? "   (rhs covers)"
                                                 : "   (rhs gap)"));
            line(2, "growth: torsion = " + fmt(art.evo.growth_chat_t) +
                        "   curvature = " + fmt(art.evo.growth_chat_rm));
        }
        if (have_comm) {
            line(1, "commutator (k = 1)");
            line(2, "lhs sup = " + fmt(comm.lhs_sup) +
                        "   rhs sup = " + fmt(comm.rhs_sup) +
                        "   c_hat = " + fmt(comm.c_hat) +
                        (comm.covered ? "   covered" : "   uncovered"));
        }
        line(1, "timing");
        line(2, "wall s = " + fmt(wall()));
        ensure_parent(cfg.report_out);
        std::ofstream out(cfg.report_out, std::ios::trunc);
        if (!out)
            throw Error(ErrorCode::io_error,
                        "cannot write report '" + cfg.report_out + "'");
        out << rep;
    }

    art.state = std::move(primary);
    if (secondary) {
        art.has_secondary = true;
        art.psi_secondary = std::move(secondary->psi);
    }
    return art;
}

}  // namespace

RunArtifacts execute(const RunConfig& cfg) { return drive(cfg, nullptr); }

RunArtifacts execute_resumed(const RunConfig& cfg, const Checkpoint& from) {
    return drive(cfg, &from);
}

std::vector<ShiSequences> read_ladders(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::io_error,
                    "cannot read ladder file '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("t,k,a", 0) != 0)
        throw Error(ErrorCode::io_error,
                    "'" + path + "' is not a ladder table");
    std::vector<ShiSequences> out;
    double prev_t = 0.0;
    int prev_k = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double f[10];
        const char* s = line.c_str();
        char* end = nullptr;
        for (int i = 0; i < 10; ++i) {
            f[i] = std::strtod(s, &end);
            if (end == s)
                throw Error(ErrorCode::io_error,
                            "malformed ladder row: " + line);
            s = (*end == ',') ? end + 1 : end;
        }
        double t = f[0];
        int k = int(f[1]);
        if (out.empty() || t != prev_t || k <= prev_k) {
            ShiSequences seq;
            seq.t = t;
            seq.kmax = -1;
            out.push_back(std::move(seq));
        }
        ShiSequences& seq = out.back();
        if (k != seq.kmax + 1)
            throw Error(ErrorCode::io_error,
                        "ladder depths must be consecutive: " + line);
        auto entry = [](double v, double okf) {
            ShiEntry e;
            e.value = v;
            e.valid = okf != 0.0;
            e.noise = false;
            return e;
        };
        seq.a.push_back(entry(f[2], f[3]));
        seq.b.push_back(entry(f[4], f[5]));
        seq.c.push_back(entry(f[6], f[7]));
        seq.d.push_back(entry(f[8], f[9]));
        seq.kmax = k;
        prev_t = t;
        prev_k = k;
    }
    return out;
}

}  // namespace g2cf
