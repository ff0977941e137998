#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "g2coflow/analysis.hpp"
#include "g2coflow/cli.hpp"
#include "g2coflow/coflow.hpp"
#include "g2coflow/errors.hpp"
#include "g2coflow/parallel.hpp"
#include "g2coflow/torsion.hpp"

using namespace g2cf;

namespace {

std::string scratch() {
    static std::string dir = [] {
        namespace fs = std::filesystem;
        fs::path p = fs::temp_directory_path() / "g2cf_cli_scratch";
        fs::remove_all(p);
        fs::create_directories(p);
        return p.string();
    }();
    return dir;
}

std::string at(const std::string& name) { return scratch() + "/" + name; }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(out.good());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

bool has(const std::string& s, const std::string& sub) {
    return s.find(sub) != std::string::npos;
}

template <class F>
Error expect_error(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e;
    }
    REQUIRE_MESSAGE(false, "expected a g2cf::Error");
    return Error(ErrorCode::ok, "");
}

// independent copy of the checkpoint checksum (FNV-1a, 64-bit) so tampering
// tests can re-seal headers and prove the loader checks fields, not just bytes
uint64_t fnv1a(const unsigned char* p, size_t n) {
    uint64_t h = 14695981039346656037ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

void reseal(std::string& bytes) {
    REQUIRE(bytes.size() > 8);
    uint64_t h = fnv1a(reinterpret_cast<const unsigned char*>(bytes.data()),
                       bytes.size() - 8);
    for (int i = 0; i < 8; ++i)
        bytes[bytes.size() - 8 + i] = char((h >> (8 * i)) & 0xff);
}

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

Csv read_csv(const std::string& path) {
    Csv c;
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    REQUIRE(std::getline(in, line));
    size_t pos = 0;
    while (true) {
        size_t comma = line.find(',', pos);
        c.header.push_back(line.substr(pos, comma - pos));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        const char* s = line.c_str();
        char* end = nullptr;
        for (size_t i = 0; i < c.header.size(); ++i) {
            row.push_back(std::strtod(s, &end));
            REQUIRE(end != s);
            s = (*end == ',') ? end + 1 : end;
        }
        c.rows.push_back(row);
    }
    return c;
}

int col(const Csv& c, const std::string& name) {
    for (size_t i = 0; i < c.header.size(); ++i)
        if (c.header[i] == name) return int(i);
    REQUIRE_MESSAGE(false, ("missing column " + name).c_str());
    return -1;
}

// every cell bitwise equal except the wall-clock column
void require_same_rows(const Csv& a, const Csv& b, size_t a_from = 0,
                       size_t b_from = 0) {
    REQUIRE(a.header == b.header);
    REQUIRE(a.rows.size() - a_from == b.rows.size() - b_from);
    int wall = col(a, "wall_s");
    for (size_t r = 0; a_from + r < a.rows.size(); ++r)
        for (size_t j = 0; j < a.header.size(); ++j) {
            if (int(j) == wall) continue;
            REQUIRE(a.rows[a_from + r][j] == b.rows[b_from + r][j]);
        }
}

const char* kMinimal =
    "dims = 16 1 1 1 1 1 1\n"
    "t_end = 0.1\n";

RunConfig cfg_of(const std::string& text) { return parse_config(text); }

}  // namespace

TEST_CASE("a minimal config applies the documented defaults") {
    RunConfig c = cfg_of(kMinimal);
    REQUIRE(c.dims[0] == 16);
    for (int a = 1; a < 7; ++a) REQUIRE(c.dims[a] == 1);
    for (int a = 0; a < 7; ++a)
        REQUIRE(c.lengths[a] == doctest::Approx(6.283185307179586).epsilon(1e-15));
    REQUIRE(c.scheme == Scheme::spectral);
    REQUIRE(c.route == RouteChoice::direct);
    REQUIRE(c.a == 1.0);
    REQUIRE(c.t_end == 0.1);
    REQUIRE(c.dt == 0.0);
    REQUIRE(c.c_cfl == 0.5);
    REQUIRE(c.kmax == 4);
    REQUIRE(c.init == InitKind::flat);
    REQUIRE(c.amplitude == 0.01);
    REQUIRE(c.modes == std::vector<int>{1});
    REQUIRE(c.axes.empty());
    REQUIRE(!c.seed_set);
    REQUIRE(c.max_amplitude == 0.1);
    REQUIRE(c.shi_time == 0.0);
    REQUIRE(c.monitors == std::vector<std::string>{"shi", "evolution"});
    REQUIRE(c.monitor_every == 1);
    REQUIRE(c.series_out == "series.csv");
    REQUIRE(c.report_out == "report.txt");
    REQUIRE(c.shi_out.empty());
    REQUIRE(c.checkpoint_out.empty());
    REQUIRE(c.checkpoint_every == 0);
    REQUIRE(c.workers == 0);
    REQUIRE(c.coclosed_threshold == 1e-8);
}

TEST_CASE("every config key parses into its field") {
    RunConfig c = cfg_of(
        "# comment line\n"
        "dims = 16 1 8 1 1 1 1\n"
        "lengths = 6.0 6.283185307179586 7 8 9 10 11\n"
        "scheme = fd4\n"
        "route = both\n"
        "a = 2.5   # trailing comment\n"
        "t_end = 0.25\n"
        "dt = 0.001\n"
        "c_cfl = 0.25\n"
        "kmax = 3\n"
        "init = perturbation\n"
        "amplitude = 0.02\n"
        "modes = 1 2 3\n"
        "axes = 0 2\n"
        "seed = 42\n"
        "max_amplitude = 0.5\n"
        "shi_time = 0.125\n"
        "monitors = shi evolution commutator\n"
        "monitor_every = 3\n"
        "series_out = s.csv\n"
        "report_out = r.txt\n"
        "shi_out = l.csv\n"
        "checkpoint_out = c.ckpt\n"
        "checkpoint_every = 10\n"
        "workers = 3\n"
        "coclosed_threshold = 1e-07\n");
    REQUIRE(c.dims == std::array<int, 7>{16, 1, 8, 1, 1, 1, 1});
    REQUIRE(c.lengths[0] == 6.0);
    REQUIRE(c.lengths[2] == 7.0);
    REQUIRE(c.lengths[6] == 11.0);
    REQUIRE(c.scheme == Scheme::fd4);
    REQUIRE(c.route == RouteChoice::both);
    REQUIRE(c.a == 2.5);
    REQUIRE(c.t_end == 0.25);
    REQUIRE(c.dt == 0.001);
    REQUIRE(c.c_cfl == 0.25);
    REQUIRE(c.kmax == 3);
    REQUIRE(c.init == InitKind::perturbation);
    REQUIRE(c.amplitude == 0.02);
    REQUIRE(c.modes == std::vector<int>{1, 2, 3});
    REQUIRE(c.axes == std::vector<int>{0, 2});
    REQUIRE(c.seed_set);
    REQUIRE(c.seed == 42);
    REQUIRE(c.max_amplitude == 0.5);
    REQUIRE(c.shi_time == 0.125);
    REQUIRE(c.monitors == std::vector<std::string>{"shi", "evolution", "commutator"});
    REQUIRE(c.monitor_every == 3);
    REQUIRE(c.series_out == "s.csv");
    REQUIRE(c.report_out == "r.txt");
    REQUIRE(c.shi_out == "l.csv");
    REQUIRE(c.checkpoint_out == "c.ckpt");
    REQUIRE(c.checkpoint_every == 10);
    REQUIRE(c.workers == 3);
    REQUIRE(c.coclosed_threshold == 1e-07);
}

TEST_CASE("malformed lines and unknown keys are rejected with line context") {
    auto bad = [](const std::string& text) {
        return expect_error([&] { parse_config(text); });
    };

    Error e = bad(std::string(kMinimal) + "banana = 3\n");
    REQUIRE(e.code() == ErrorCode::parse_error);
    REQUIRE(has(e.what(), "line 3"));
    REQUIRE(has(e.what(), "banana"));

    e = bad("dims = 16 1 1 1 1 1 1\ndims = 8 1 1 1 1 1 1\nt_end = 0.1\n");
    REQUIRE(e.code() == ErrorCode::parse_error);
    REQUIRE(has(e.what(), "line 2"));
    REQUIRE(has(e.what(), "dims"));

    e = bad("dims 16 1 1 1 1 1 1\n");
    REQUIRE(e.code() == ErrorCode::parse_error);
    REQUIRE(has(e.what(), "line 1"));

    e = bad(std::string(kMinimal) + "scheme = banana\n");
    REQUIRE(e.code() == ErrorCode::parse_error);
    REQUIRE(has(e.what(), "scheme"));

    e = bad(std::string(kMinimal) + "a = xyz\n");
    REQUIRE(e.code() == ErrorCode::parse_error);
    REQUIRE(has(e.what(), "'a'"));

    e = bad(std::string(kMinimal) + "modes = 1 x\n");
    REQUIRE(e.code() == ErrorCode::parse_error);
    REQUIRE(has(e.what(), "modes"));

    e = bad("dims = 16 1 1\nt_end = 0.1\n");
    REQUIRE(e.code() == ErrorCode::parse_error);
    REQUIRE(has(e.what(), "dims"));

    e = bad("dims =\nt_end = 0.1\n");
    REQUIRE(e.code() == ErrorCode::parse_error);

    e = bad(std::string(kMinimal) + "monitors = shi banana\n");
    REQUIRE(e.code() == ErrorCode::parse_error);
    REQUIRE(has(e.what(), "monitors"));

    e = expect_error([&] { parse_config_file(at("missing.cfg")); });
    REQUIRE(e.code() == ErrorCode::io_error);
}

TEST_CASE("semantic violations name the offending constraint") {
    auto bad = [](const std::string& text) {
        Error e = expect_error([&] { parse_config(text); });
        REQUIRE(e.code() == ErrorCode::config_error);
        return std::string(e.what());
    };

    REQUIRE(has(bad("t_end = 0.1\n"), "dims"));
    REQUIRE(has(bad("dims = 16 1 1 1 1 1 1\n"), "t_end"));
    REQUIRE(has(bad(std::string(kMinimal) + "a = 0\n"), "positive"));
    REQUIRE(has(bad(std::string(kMinimal) + "a = -1\n"), "positive"));
    REQUIRE(has(bad("dims = 15 1 1 1 1 1 1\nt_end = 0.1\n"), "axis 0"));
    REQUIRE(has(bad(std::string(kMinimal) + "init = perturbation\n"), "seed"));
    REQUIRE(has(bad(std::string(kMinimal) +
                    "init = perturbation\nseed = 1\namplitude = 0.2\n"),
                "amplitude"));
    REQUIRE(has(bad(std::string(kMinimal) + "kmax = 5\n"), "kmax"));
    REQUIRE(has(bad("dims = 16 1 1 1 1 1 1\nt_end = 0\n"), "t_end"));
    REQUIRE(has(bad(std::string(kMinimal) + "shi_time = 0.2\n"), "shi_time"));
    REQUIRE(has(bad(std::string(kMinimal) +
                    "init = perturbation\nseed = 1\naxes = 1\n"),
                "axes"));
    REQUIRE(has(bad(std::string(kMinimal) +
                    "init = perturbation\nseed = 1\nmodes = 8\n"),
                "mode"));
    REQUIRE(has(bad(std::string(kMinimal) + "monitor_every = 0\n"), "monitor_every"));
    REQUIRE(has(bad(std::string(kMinimal) + "checkpoint_every = -1\n"),
                "checkpoint_every"));
    REQUIRE(has(bad(std::string(kMinimal) + "workers = -2\n"), "workers"));
    REQUIRE(has(bad(std::string(kMinimal) + "dt = -1\n"), "dt"));
    REQUIRE(has(bad(std::string(kMinimal) + "c_cfl = 0\n"), "c_cfl"));
    REQUIRE(has(bad(std::string(kMinimal) +
                    "init = perturbation\nseed = 1\namplitude = 0\n"),
                "amplitude"));
    REQUIRE(has(bad(std::string(kMinimal) + "max_amplitude = 0\n"),
                "max_amplitude"));
}

TEST_CASE("flat initial data is the constant standard 4-form") {
    for (const char* scheme : {"spectral", "fd4"}) {
        RunConfig c = cfg_of(std::string(kMinimal) + "scheme = " + scheme + "\n");
        DerivOps ops = make_ops(c);
        TensorField psi = build_initial(c, ops);
        TensorField ref = constant_form_field(ops.grid, standard_psi());
        REQUIRE(psi.data.size() == ref.data.size());
        REQUIRE(std::memcmp(psi.data.data(), ref.data.data(),
                            psi.data.size() * sizeof(double)) == 0);
        REQUIRE(coclosed_residual(psi, ops) == 0.0);
    }
}

TEST_CASE("perturbed initial data is deterministic, coclosed, and axis-restricted") {
    std::string text =
        "dims = 1 8 8 1 1 1 1\n"
        "t_end = 0.01\n"
        "init = perturbation\n"
        "seed = 3\n"
        "amplitude = 0.005\n"
        "modes = 1\n"
        "axes = 1\n";
    RunConfig c = cfg_of(text);
    DerivOps ops = make_ops(c);
    TensorField a = build_initial(c, ops);
    TensorField b = build_initial(c, ops);
    REQUIRE(std::memcmp(a.data.data(), b.data.data(),
                        a.data.size() * sizeof(double)) == 0);

    RunConfig c2 = c;
    c2.seed = 4;
    TensorField d = build_initial(c2, ops);
    REQUIRE(std::memcmp(a.data.data(), d.data.data(),
                        a.data.size() * sizeof(double)) != 0);

    TensorField flat = constant_form_field(ops.grid, standard_psi());
    double dev = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        dev = std::max(dev, std::fabs(a.data[i] - flat.data[i]));
    REQUIRE(dev > 1e-5);

    REQUIRE(coclosed_residual(a, ops) <= 1e-10);

    // the perturbation touches only axis 1, so axis-2 translates fix the data
    auto st = ops.grid.strides();
    for (int j = 0; j < 8; ++j)
        for (int k = 1; k < 8; ++k) {
            const double* base = a.node(j * st[1]);
            const double* moved = a.node(j * st[1] + k * st[2]);
            REQUIRE(std::memcmp(base, moved, 35 * sizeof(double)) == 0);
        }

    FlowState s = make_state(a, 0.0, 1.0, ops);  // positivity holds
    REQUIRE(s.cache.star_residual <= 1e-10);
}

TEST_CASE("an over-amplitude perturbation reports the largest safe amplitude") {
    std::string text =
        "dims = 8 1 1 1 1 1 1\n"
        "t_end = 0.01\n"
        "init = perturbation\n"
        "seed = 5\n"
        "amplitude = 10\n"
        "max_amplitude = 20\n"
        "modes = 1\n";
    RunConfig c = cfg_of(text);
    DerivOps ops = make_ops(c);
    Error e = expect_error([&] { build_initial(c, ops); });
    REQUIRE(e.code() == ErrorCode::not_positive);
    std::string msg = e.what();
    REQUIRE(has(msg, "amplitude"));
    size_t pos = msg.find("about ");
    REQUIRE(pos != std::string::npos);
    double safe = std::strtod(msg.c_str() + pos + 6, nullptr);
    REQUIRE(safe > 0.0);
    REQUIRE(safe < 10.0);

    RunConfig ok = c;
    ok.amplitude = 0.5 * safe;
    TensorField psi = build_initial(ok, ops);
    make_state(psi, 0.0, 1.0, ops);

    RunConfig still_bad = c;
    still_bad.amplitude = std::min(20.0, 2.0 * safe);
    Error e2 = expect_error([&] { build_initial(still_bad, ops); });
    REQUIRE(e2.code() == ErrorCode::not_positive);
}

TEST_CASE("checkpoints round-trip bitwise and reject tampering") {
    std::string ck = at("roundtrip.ckpt");
    RunConfig c = cfg_of(
        "dims = 8 1 1 1 1 1 1\n"
        "t_end = 0.003\n"
        "dt = 0.001\n"
        "init = perturbation\n"
        "seed = 2\n"
        "amplitude = 0.005\n"
        "series_out = " + at("roundtrip.csv") + "\n"
        "report_out = " + at("roundtrip.txt") + "\n"
        "checkpoint_out = " + ck + "\n");
    RunArtifacts art = execute(c);
    REQUIRE(!art.aborted);
    REQUIRE(art.steps == 3);

    Checkpoint loaded = load_checkpoint(ck);
    REQUIRE(loaded.version == 1);
    REQUIRE(loaded.step == 3);
    REQUIRE(loaded.t == art.state.t);
    REQUIRE(loaded.a == 1.0);
    REQUIRE(loaded.dt == art.dt);
    REQUIRE(loaded.route == RouteChoice::direct);
    REQUIRE(loaded.scheme == Scheme::spectral);
    REQUIRE(loaded.dims == c.dims);
    REQUIRE(!loaded.has_secondary);
    REQUIRE(loaded.psi.data == art.state.psi.data);
    REQUIRE(loaded.phi.data == art.state.cache.phi.data);

    std::string copy = at("copy.ckpt");
    save_checkpoint(copy, loaded);
    REQUIRE(read_file(ck) == read_file(copy));

    std::string bytes = read_file(ck);

    {  // drop the final byte: the seal no longer matches
        std::string t = bytes.substr(0, bytes.size() - 1);
        write_file(at("trunc.ckpt"), t);
        Error e = expect_error([&] { load_checkpoint(at("trunc.ckpt")); });
        REQUIRE(e.code() == ErrorCode::checksum_mismatch);
    }
    {  // flip one payload byte
        std::string t = bytes;
        t[t.size() - 20] = char(t[t.size() - 20] ^ 0x40);
        write_file(at("flip.ckpt"), t);
        Error e = expect_error([&] { load_checkpoint(at("flip.ckpt")); });
        REQUIRE(e.code() == ErrorCode::checksum_mismatch);
    }
    {  // future format version, correctly sealed
        std::string t = bytes;
        t[8] = char(t[8] + 1);
        reseal(t);
        write_file(at("ver.ckpt"), t);
        Error e = expect_error([&] { load_checkpoint(at("ver.ckpt")); });
        REQUIRE(e.code() == ErrorCode::version_mismatch);
    }
    {  // wrong magic, correctly sealed
        std::string t = bytes;
        t[0] = 'X';
        reseal(t);
        write_file(at("magic.ckpt"), t);
        Error e = expect_error([&] { load_checkpoint(at("magic.ckpt")); });
        REQUIRE(e.code() == ErrorCode::io_error);
    }

    Error e = expect_error([&] { load_checkpoint(at("nothere.ckpt")); });
    REQUIRE(e.code() == ErrorCode::io_error);
}

TEST_CASE("a flat run writes identically-zero monitor columns and a clean report") {
    RunConfig c = cfg_of(
        "dims = 16 1 1 1 1 1 1\n"
        "t_end = 0.005\n"
        "dt = 0.001\n"
        "route = both\n"
        "series_out = " + at("flat.csv") + "\n"
        "report_out = " + at("flat.txt") + "\n");
    RunArtifacts art = execute(c);
    REQUIRE(!art.aborted);
    REQUIRE(art.steps == 5);

    Csv s = read_csv(at("flat.csv"));
    REQUIRE(s.header ==
            std::vector<std::string>{"step", "t", "dt", "sup_dpsi", "lambda_sup",
                                     "sup_torsion", "min_eig", "star_residual",
                                     "sup_rate", "agg_phi", "agg_psi",
                                     "route_gap", "wall_s"});
    REQUIRE(s.rows.size() == 6);
    for (size_t r = 0; r < s.rows.size(); ++r) {
        REQUIRE(s.rows[r][col(s, "step")] == double(r));
        REQUIRE(s.rows[r][col(s, "sup_dpsi")] == 0.0);
        REQUIRE(s.rows[r][col(s, "lambda_sup")] == 0.0);
        REQUIRE(s.rows[r][col(s, "sup_torsion")] == 0.0);
        REQUIRE(s.rows[r][col(s, "star_residual")] == 0.0);
        REQUIRE(s.rows[r][col(s, "sup_rate")] == 0.0);
        REQUIRE(s.rows[r][col(s, "agg_phi")] == 211.0);
        REQUIRE(s.rows[r][col(s, "agg_psi")] == 0.0);
        REQUIRE(s.rows[r][col(s, "route_gap")] == 0.0);
        REQUIRE(s.rows[r][col(s, "min_eig")] ==
                doctest::Approx(1.0).epsilon(1e-12));
        if (r > 0) REQUIRE(s.rows[r][col(s, "t")] > s.rows[r - 1][col(s, "t")]);
    }

    TensorField flat = constant_form_field(art.state.psi.grid, standard_psi());
    REQUIRE(art.state.psi.data == flat.data);

    std::string report = read_file(at("flat.txt"));
    REQUIRE(has(report, "status: completed"));
    REQUIRE(has(report, "ladders"));
    REQUIRE(art.have_fit);
    REQUIRE(art.fit.degenerate);
    REQUIRE(art.fit.c_fit == 0.0);

    // the fixed point holds for the finite-difference scheme as well
    RunConfig c2 = cfg_of(
        "dims = 16 1 1 1 1 1 1\n"
        "t_end = 0.003\n"
        "dt = 0.001\n"
        "scheme = fd4\n"
        "route = velocity\n"
        "series_out = " + at("flat_fd4.csv") + "\n"
        "report_out = " + at("flat_fd4.txt") + "\n");
    RunArtifacts art2 = execute(c2);
    REQUIRE(!art2.aborted);
    REQUIRE(art2.state.psi.data == flat.data);
    Csv s2 = read_csv(at("flat_fd4.csv"));
    REQUIRE(col(s2, "sup_rate") >= 0);
    for (const auto& row : s2.rows) REQUIRE(row[col(s2, "sup_rate")] == 0.0);
    for (const auto& h : s2.header) REQUIRE(h != "route_gap");
}

TEST_CASE("interrupting and resuming a run reproduces the trajectory bitwise") {
    std::string ck = at("resume.ckpt");
    std::string base =
        "dims = 16 1 1 1 1 1 1\n"
        "t_end = 0.04\n"
        "dt = 0.001\n"
        "route = both\n"
        "kmax = 2\n"
        "init = perturbation\n"
        "seed = 11\n"
        "amplitude = 0.005\n"
        "modes = 1 2\n"
        "monitor_every = 5\n"
        "shi_time = 0.02\n"
        "checkpoint_every = 20\n";
    RunConfig full = cfg_of(base +
                            "series_out = " + at("full.csv") + "\n"
                            "report_out = " + at("full.txt") + "\n"
                            "checkpoint_out = " + ck + "\n");
    RunArtifacts a = execute(full);
    REQUIRE(!a.aborted);
    REQUIRE(a.steps == 40);
    REQUIRE(std::filesystem::exists(ck + ".20"));
    REQUIRE(std::filesystem::exists(ck + ".40"));

    Checkpoint mid = load_checkpoint(ck + ".20");
    REQUIRE(mid.step == 20);
    REQUIRE(mid.has_secondary);

    RunConfig rest = cfg_of(base +
                            "series_out = " + at("rest.csv") + "\n"
                            "report_out = " + at("rest.txt") + "\n"
                            "checkpoint_out = " + at("rest.ckpt") + "\n");
    RunArtifacts b = execute_resumed(rest, mid);
    REQUIRE(!b.aborted);
    REQUIRE(b.steps == 40);

    // the resumed tail matches the uninterrupted run bit for bit
    REQUIRE(b.state.psi.data == a.state.psi.data);
    REQUIRE(b.final_gap == a.final_gap);
    REQUIRE(read_file(ck) == read_file(at("rest.ckpt")));

    Csv fa = read_csv(at("full.csv"));
    Csv fb = read_csv(at("rest.csv"));
    REQUIRE(fb.rows[0][col(fb, "step")] == 20.0);
    size_t from = 0;
    while (from < fa.rows.size() && fa.rows[from][col(fa, "step")] < 20.0) ++from;
    require_same_rows(fa, fb, from, 0);

    // the dual-route gap column starts at zero and stays small
    REQUIRE(fa.rows.front()[col(fa, "route_gap")] == 0.0);
    for (const auto& row : fa.rows) {
        REQUIRE(row[col(fa, "route_gap")] >= 0.0);
        REQUIRE(row[col(fa, "route_gap")] < 1e-6);
    }

    // a checkpoint from a different grid is rejected up front
    RunConfig other = cfg_of(std::string(base).replace(
                                 base.find("dims = 16"), 9, "dims = 8 ") +
                             "series_out = " + at("o.csv") + "\n"
                             "report_out = " + at("o.txt") + "\n");
    Error e = expect_error([&] { execute_resumed(other, mid); });
    REQUIRE(e.code() == ErrorCode::config_error);
}

TEST_CASE("an unstable step size aborts with the step index and keeps partial outputs") {
    RunConfig c = cfg_of(
        "dims = 16 1 1 1 1 1 1\n"
        "t_end = 60\n"
        "c_cfl = 10\n"
        "init = perturbation\n"
        "seed = 9\n"
        "amplitude = 0.01\n"
        "modes = 1 2\n"
        "series_out = " + at("blow.csv") + "\n"
        "report_out = " + at("blow.txt") + "\n");
    RunArtifacts art = execute(c);
    REQUIRE(art.aborted);
    REQUIRE(art.abort_code == ErrorCode::stability_violation);
    REQUIRE(has(art.abort_message, "step"));

    Csv s = read_csv(at("blow.csv"));
    REQUIRE(s.rows.size() >= 1);
    std::string report = read_file(at("blow.txt"));
    REQUIRE(has(report, "aborted"));
    REQUIRE(has(report, "stability violation"));
}

TEST_CASE("the worker count changes nothing but the wall-time column") {
    std::string base =
        "dims = 16 1 1 1 1 1 1\n"
        "t_end = 0.02\n"
        "dt = 0.001\n"
        "kmax = 2\n"
        "init = perturbation\n"
        "seed = 13\n"
        "amplitude = 0.005\n"
        "monitor_every = 4\n";
    RunConfig one = cfg_of(base +
                           "workers = 1\n"
                           "series_out = " + at("w1.csv") + "\n"
                           "report_out = " + at("w1.txt") + "\n"
                           "checkpoint_out = " + at("w1.ckpt") + "\n");
    RunConfig five = cfg_of(base +
                            "workers = 5\n"
                            "series_out = " + at("w5.csv") + "\n"
                            "report_out = " + at("w5.txt") + "\n"
                            "checkpoint_out = " + at("w5.ckpt") + "\n");
    int before = worker_count();
    RunArtifacts a1 = execute(one);
    RunArtifacts a5 = execute(five);
    REQUIRE(worker_count() == before);  // execute restores the pool
    REQUIRE(!a1.aborted);
    REQUIRE(!a5.aborted);
    REQUIRE(a1.state.psi.data == a5.state.psi.data);
    REQUIRE(read_file(at("w1.ckpt")) == read_file(at("w5.ckpt")));
    require_same_rows(read_csv(at("w1.csv")), read_csv(at("w5.csv")));

    Csv s = read_csv(at("w1.csv"));
    for (const auto& h : s.header) REQUIRE(h != "route_gap");
}

TEST_CASE("ladder files round-trip through the analyticity fit") {
    RunConfig c = cfg_of(
        "dims = 16 1 1 1 1 1 1\n"
        "t_end = 0.02\n"
        "dt = 0.001\n"
        "kmax = 3\n"
        "init = perturbation\n"
        "seed = 17\n"
        "amplitude = 0.005\n"
        "modes = 1 2\n"
        "monitor_every = 2\n"
        "shi_time = 0.01\n"
        "series_out = " + at("lad.csv") + "\n"
        "report_out = " + at("lad.txt") + "\n"
        "shi_out = " + at("ladders.csv") + "\n");
    RunArtifacts art = execute(c);
    REQUIRE(!art.aborted);
    REQUIRE(!art.ladders.empty());
    REQUIRE(art.have_sample);
    REQUIRE(art.sample.kmax == 3);
    for (int k = 0; k <= art.sample.kmax; ++k) {
        REQUIRE(art.sample.a[k].valid);
        REQUIRE(std::isfinite(art.sample.a[k].value));
        REQUIRE(std::isfinite(art.sample.b[k].value));
    }

    std::vector<ShiSequences> back = read_ladders(at("ladders.csv"));
    REQUIRE(back.size() == art.ladders.size());
    for (size_t i = 0; i < back.size(); ++i) {
        REQUIRE(back[i].t == art.ladders[i].t);
        REQUIRE(back[i].kmax == art.ladders[i].kmax);
        for (int k = 0; k <= back[i].kmax; ++k) {
            REQUIRE(back[i].a[k].value == art.ladders[i].a[k].value);
            REQUIRE(back[i].b[k].value == art.ladders[i].b[k].value);
            REQUIRE(back[i].c[k].value == art.ladders[i].c[k].value);
            REQUIRE(back[i].d[k].value == art.ladders[i].d[k].value);
            bool usable = art.ladders[i].a[k].valid && !art.ladders[i].a[k].noise;
            REQUIRE((back[i].a[k].valid && !back[i].a[k].noise) == usable);
        }
    }

    auto run_fit = [](const std::vector<ShiSequences>& seqs) {
        try {
            AnalyticityFit f = fit_analyticity(seqs);
            return std::pair<bool, AnalyticityFit>(true, f);
        } catch (const Error&) {
            return std::pair<bool, AnalyticityFit>(false, AnalyticityFit{});
        }
    };
    auto [ok_a, fit_a] = run_fit(art.ladders);
    auto [ok_b, fit_b] = run_fit(back);
    REQUIRE(ok_a == ok_b);
    if (ok_a) {
        REQUIRE(fit_a.c_fit == fit_b.c_fit);
        REQUIRE(fit_a.l_fit == fit_b.l_fit);
        REQUIRE(fit_a.kmax_used == fit_b.kmax_used);
        REQUIRE(fit_a.consistent == fit_b.consistent);
        REQUIRE(art.have_fit);
        REQUIRE(art.fit.c_fit == fit_a.c_fit);
    }
}
