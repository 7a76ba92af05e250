#include "glfield/ensemble.hpp"

#include <bit>
#include <cstring>

#include "glfield/errors.hpp"
#include "glfield/parallel.hpp"

namespace glf {

namespace {

constexpr char kMagic[8] = {'G', 'L', 'F', 'E', 'N', 'S', '0', '1'};

std::uint64_t to_le(std::uint64_t x) {
    if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(x);
    return x;
}

// Converts doubles between host order and little-endian in place.
void swap_if_big(std::span<double> v) {
    if constexpr (std::endian::native == std::endian::big) {
        for (double& x : v) x = std::bit_cast<double>(__builtin_bswap64(std::bit_cast<std::uint64_t>(x)));
    }
}

void write_header(std::ostream& os, const json& header) {
    const std::string text = header.dump();
    const std::uint64_t len = to_le(text.size());
    os.write(kMagic, sizeof kMagic);
    os.write(reinterpret_cast<const char*>(&len), sizeof len);
    os.write(text.data(), std::streamsize(text.size()));
}

json read_header(std::istream& is, const std::filesystem::path& path) {
    char magic[8];
    std::uint64_t len = 0;
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        fail(ErrorKind::integrity, path.string() + ": not an ensemble file (bad magic)");
    }
    if (!is.read(reinterpret_cast<char*>(&len), sizeof len)) {
        fail(ErrorKind::integrity, path.string() + ": truncated header");
    }
    len = to_le(len);
    if (len > (1u << 30)) fail(ErrorKind::integrity, path.string() + ": implausible header length");
    std::string text(len, '\0');
    if (!is.read(text.data(), std::streamsize(len))) fail(ErrorKind::integrity, path.string() + ": truncated header");
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::integrity, path.string() + ": header is not valid JSON (" + e.what() + ")");
    }
}

void check_header(const json& h, const std::filesystem::path& path) {
    if (!h.contains("N") || !h["N"].is_number_integer() || !h.contains("count") || !h["count"].is_number_integer()) {
        fail(ErrorKind::integrity, path.string() + ": header lacks N/count");
    }
}

std::uintmax_t expected_file_size(const json& h) {
    const std::uint64_t side = 2 * h["N"].get<std::uint64_t>() + 1;
    return 16 + h.dump().size() + side * side * h["count"].get<std::uint64_t>() * sizeof(double);
}

} // namespace

// ------------------------------------------------------------- json helpers

json to_json(const SamplerConfig& c) {
    return json{{"sweeps_burnin", c.sweeps_burnin},
                {"sweeps_between_samples", c.sweeps_between_samples},
                {"n_samples", c.n_samples},
                {"kernel", to_string(c.kernel)},
                {"proposal_std", c.proposal_std},
                {"tune_proposal", c.tune_proposal},
                {"checkerboard", c.checkerboard},
                {"seed", c.seed},
                {"diagnostics", c.diagnostics},
                {"chains", c.chains},
                {"threads", c.threads},
                {"hmc_steps", c.hmc_steps},
                {"hmc_time", c.hmc_time},
                {"hmc_kappa", c.hmc_kappa}};
}

SamplerConfig sampler_config_from_json(const json& j) {
    if (!j.is_object()) fail(ErrorKind::config, "sampler config must be an object");
    SamplerConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "sweeps_burnin") c.sweeps_burnin = value.get<std::uint64_t>();
            else if (key == "sweeps_between_samples") c.sweeps_between_samples = value.get<std::uint64_t>();
            else if (key == "n_samples") c.n_samples = value.get<std::uint64_t>();
            else if (key == "kernel") c.kernel = kernel_from_string(value.get<std::string>());
            else if (key == "proposal_std") c.proposal_std = value.get<double>();
            else if (key == "tune_proposal") c.tune_proposal = value.get<bool>();
            else if (key == "checkerboard") c.checkerboard = value.get<bool>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "diagnostics") c.diagnostics = value.get<bool>();
            else if (key == "chains") c.chains = value.get<int>();
            else if (key == "threads") c.threads = value.get<int>();
            else if (key == "hmc_steps") c.hmc_steps = value.get<int>();
            else if (key == "hmc_time") c.hmc_time = value.get<double>();
            else if (key == "hmc_kappa") c.hmc_kappa = value.get<double>();
            else fail(ErrorKind::config, "unknown sampler key '" + key + "'");
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::config, std::string("sampler config: ") + e.what());
    }
    return c;
}

json to_json(const TraceDiagnostics& d) {
    return json{{"n", d.n},           {"mean", d.mean},       {"variance", d.variance},
                {"sum_autocorr", d.sum_autocorr}, {"tau_int", d.tau_int}, {"window", d.window},
                {"ess", d.ess}};
}

json to_json(const ChainDiagnostics& d) {
    return json{{"acceptance", d.acceptance}, {"center", to_json(d.center)}, {"maximum", to_json(d.maximum)},
                {"n_samples", d.n_samples},   {"flagged", d.flagged},        {"proposal_std", d.proposal_std},
                {"kappa", d.kappa}};
}

json potential_json(const Potential& p) {
    json params = json::object();
    for (const auto& [k, v] : p.params()) params[k] = v;
    return json{{"name", p.name()}, {"params", params}};
}

Potential potential_from_json(const json& j) {
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) {
        fail(ErrorKind::config, "potential needs a string 'name'");
    }
    for (const auto& [key, value] : j.items()) {
        if (key != "name" && key != "params") fail(ErrorKind::config, "unknown potential key '" + key + "'");
    }
    Potential::Params params;
    if (j.contains("params")) {
        if (!j["params"].is_object()) fail(ErrorKind::config, "potential params must be an object");
        for (const auto& [k, v] : j["params"].items()) {
            if (!v.is_number()) fail(ErrorKind::config, "potential parameter '" + k + "' must be a number");
            params.emplace_back(k, v.get<double>());
        }
    }
    return Potential::from_spec(j["name"].get<std::string>(), params);
}

// ---------------------------------------------------------- EnsembleStore

EnsembleStore::EnsembleStore(LatticeDomain domain, json header) : domain_(domain), header_(std::move(header)) {
    if (!header_.is_object()) header_ = json::object();
    header_["N"] = domain_.half_width();
    header_["count"] = 0;
}

std::span<const double> EnsembleStore::field(std::size_t i) const {
    if (i >= count_) fail(ErrorKind::input, "ensemble index out of range");
    const std::size_t n = std::size_t(domain_.size());
    return {data_.data() + i * n, n};
}

FieldState EnsembleStore::state(std::size_t i) const {
    const auto f = field(i);
    FieldState s(domain_, std::vector<double>(f.begin(), f.end()));
    if (header_.contains("seeds") && header_["seeds"].contains("master")) {
        s.seed = header_["seeds"]["master"].get<std::uint64_t>();
    }
    s.stream = i;
    return s;
}

void EnsembleStore::resize(std::size_t count) {
    count_ = count;
    data_.resize(count * std::size_t(domain_.size()), 0.0);
    header_["count"] = count_;
}

void EnsembleStore::set(std::size_t i, const FieldState& f) {
    if (i >= count_) fail(ErrorKind::input, "ensemble index out of range");
    if (!(f.domain() == domain_)) fail(ErrorKind::input, "field belongs to a different domain");
    std::copy(f.values().begin(), f.values().end(), data_.begin() + std::ptrdiff_t(i * std::size_t(domain_.size())));
}

void EnsembleStore::append(const FieldState& f) {
    resize(count_ + 1);
    set(count_ - 1, f);
}

void EnsembleStore::write(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::input, "cannot open " + path.string() + " for writing");
    write_header(os, header_);
    if constexpr (std::endian::native == std::endian::big) {
        std::vector<double> copy = data_;
        swap_if_big(copy);
        os.write(reinterpret_cast<const char*>(copy.data()), std::streamsize(copy.size() * sizeof(double)));
    } else {
        os.write(reinterpret_cast<const char*>(data_.data()), std::streamsize(data_.size() * sizeof(double)));
    }
    if (!os) fail(ErrorKind::input, "failed writing " + path.string());
}

EnsembleStore EnsembleStore::read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::input, "cannot open " + path.string());
    json h = read_header(is, path);
    check_header(h, path);
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec || size != expected_file_size(h)) {
        fail(ErrorKind::integrity, path.string() + ": payload size does not match the header");
    }
    const std::size_t count = h["count"].get<std::size_t>();
    EnsembleStore store(LatticeDomain(h["N"].get<int>()), h);
    store.resize(count);
    if (!is.read(reinterpret_cast<char*>(store.data_.data()), std::streamsize(store.data_.size() * sizeof(double)))) {
        fail(ErrorKind::integrity, path.string() + ": truncated payload");
    }
    swap_if_big(store.data_);
    store.header_ = std::move(h);
    return store;
}

json read_ensemble_header(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::input, "cannot open " + path.string());
    json h = read_header(is, path);
    check_header(h, path);
    return h;
}

// ---------------------------------------------------------- EnsembleWriter

EnsembleWriter::EnsembleWriter(const std::filesystem::path& path, LatticeDomain domain, json header,
                               std::size_t count)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), domain_(domain), expected_(count) {
    if (!out_) fail(ErrorKind::input, "cannot open " + path.string() + " for writing");
    header["N"] = domain.half_width();
    header["count"] = count;
    write_header(out_, header);
}

void EnsembleWriter::write(const FieldState& f) {
    if (written_ >= expected_) fail(ErrorKind::input, "more fields than declared in the header");
    if (!(f.domain() == domain_)) fail(ErrorKind::input, "field belongs to a different domain");
    std::vector<double> copy(f.values().begin(), f.values().end());
    swap_if_big(copy);
    out_.write(reinterpret_cast<const char*>(copy.data()), std::streamsize(copy.size() * sizeof(double)));
    ++written_;
}

void EnsembleWriter::close() {
    out_.close();
    if (written_ != expected_) fail(ErrorKind::input, path_.string() + ": fewer fields written than declared");
    if (!out_) fail(ErrorKind::input, "failed writing " + path_.string());
}

// ------------------------------------------------------------------ sources

void StoreSource::visit(const std::function<void(std::size_t, const FieldState&)>& fn) {
    const std::size_t n = store_.count();
    const std::size_t blocks = std::min<std::size_t>(std::size_t(threads_), n);
    parallel_for(blocks, threads_, [&](std::size_t b) {
        for (std::size_t i = n * b / blocks; i < n * (b + 1) / blocks; ++i) fn(i, store_.state(i));
    });
}

FileSource::FileSource(std::filesystem::path path, int threads) : path_(std::move(path)), threads_(threads) {
    header_ = read_ensemble_header(path_);
    std::error_code ec;
    const auto size = std::filesystem::file_size(path_, ec);
    if (ec || size != expected_file_size(header_)) {
        fail(ErrorKind::integrity, path_.string() + ": payload size does not match the header");
    }
    domain_ = LatticeDomain(header_["N"].get<int>());
    count_ = header_["count"].get<std::size_t>();
}

void FileSource::visit(const std::function<void(std::size_t, const FieldState&)>& fn) {
    std::ifstream is(path_, std::ios::binary);
    if (!is) fail(ErrorKind::input, "cannot open " + path_.string());
    read_header(is, path_);
    const std::size_t n = std::size_t(domain_.size());
    const std::size_t batch = std::size_t(std::max(threads_, 1));
    std::vector<FieldState> fields;
    for (std::size_t start = 0; start < count_; start += batch) {
        const std::size_t len = std::min(batch, count_ - start);
        fields.clear();
        for (std::size_t k = 0; k < len; ++k) {
            std::vector<double> v(n);
            if (!is.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(double)))) {
                fail(ErrorKind::integrity, path_.string() + ": truncated payload");
            }
            swap_if_big(v);
            fields.emplace_back(domain_, std::move(v));
            fields.back().stream = start + k;
        }
        parallel_for(len, threads_, [&](std::size_t k) { fn(start + k, fields[k]); });
    }
}

SamplerSource::SamplerSource(FieldState initial, Potential p, SamplerConfig cfg)
    : initial_(std::move(initial)), p_(std::move(p)), cfg_(cfg) {
    cfg_.validate();
}

json SamplerSource::provenance() const {
    return json{{"N", initial_.domain().half_width()},
                {"count", cfg_.n_samples},
                {"potential", potential_json(p_)},
                {"sampler", to_json(cfg_)},
                {"seeds", {{"master", cfg_.seed}, {"rule", "child = splitmix64(master ^ splitmix64(index + 0x632BE59BD9B4E019))"}}},
                {"diagnostics", to_json(diag_)}};
}

void SamplerSource::visit(const std::function<void(std::size_t, const FieldState&)>& fn) {
    diag_ = run_chains(initial_, p_, cfg_, fn);
}

// ------------------------------------------------------------ sample_ensemble

EnsembleStore sample_ensemble(const FieldState& initial, const Potential& p, const SamplerConfig& cfg) {
    SamplerSource source(initial, p, cfg);
    EnsembleStore store(initial.domain(), json::object());
    store.resize(cfg.n_samples);
    source.visit([&](std::size_t i, const FieldState& f) { store.set(i, f); });
    json h = source.provenance();
    h["count"] = store.count();
    store.header() = h;
    return store;
}

EnsembleStore sample_ensemble(const LatticeDomain& domain, const Potential& p, const SamplerConfig& cfg) {
    return sample_ensemble(FieldState(domain), p, cfg);
}

ChainDiagnostics diagnostics(const EnsembleStore& store) {
    const LatticeDomain& d = store.domain();
    const std::size_t n = store.count();
    std::size_t chains = 1;
    const json& h = store.header();
    if (h.contains("sampler") && h["sampler"].contains("chains") && h["sampler"].value("kernel", "") != "exact") {
        chains = std::max<std::size_t>(1, h["sampler"]["chains"].get<std::size_t>());
    }
    const std::int64_t centre = d.index({0, 0});
    std::vector<std::vector<double>> ct(chains), mt(chains);
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = store.field(i);
        ct[i % chains].push_back(f[std::size_t(centre)]);
        mt[i % chains].push_back(*std::max_element(f.begin(), f.end()));
    }
    ChainDiagnostics out;
    out.n_samples = n;
    if (h.contains("diagnostics") && h["diagnostics"].contains("acceptance")) {
        out.acceptance = h["diagnostics"]["acceptance"].get<double>();
    }
    auto pooled = [&](const std::vector<std::vector<double>>& traces) {
        TraceDiagnostics t;
        double ess = 0.0;
        for (const auto& tr : traces) {
            t.n += tr.size();
            try {
                const auto one = analyze_trace(tr);
                ess += one.ess;
                t.window = std::max(t.window, one.window);
            } catch (const Error&) {
                out.flagged = true;
            }
        }
        t.ess = ess;
        t.tau_int = ess > 0 ? double(t.n) / ess : 0.0;
        t.sum_autocorr = ess > 0 ? 0.5 * (t.tau_int - 1.0) : 0.0;
        if (ess < 100.0) out.flagged = true;
        return t;
    };
    out.center = pooled(ct);
    out.maximum = pooled(mt);
    return out;
}

} // namespace glf
