#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "glfield/field.hpp"
#include "glfield/potential.hpp"
#include "glfield/sampler.hpp"

namespace glf {

using json = nlohmann::json;

json to_json(const SamplerConfig& cfg);
/// Config error on unknown keys or wrong types; missing keys keep defaults.
SamplerConfig sampler_config_from_json(const json& j);
json to_json(const TraceDiagnostics& d);
json to_json(const ChainDiagnostics& d);
json potential_json(const Potential& p);
Potential potential_from_json(const json& j);

/// Independent field samples with provenance. On disk:
///   "GLFENS01" | uint64 LE header length | JSON header | float64 LE payload
/// with fields row-major and concatenated. Round trips are bit-exact.
class EnsembleStore {
public:
    EnsembleStore(LatticeDomain domain, json header);

    const LatticeDomain& domain() const noexcept { return domain_; }
    /// {"N", "count", "potential", "sampler", "seeds", "diagnostics", ...}
    const json& header() const noexcept { return header_; }
    json& header() noexcept { return header_; }

    std::size_t count() const noexcept { return count_; }
    std::span<const double> field(std::size_t i) const;
    FieldState state(std::size_t i) const;

    void resize(std::size_t count);
    void set(std::size_t i, const FieldState& field);
    void append(const FieldState& field);

    void write(const std::filesystem::path& path) const;
    /// Integrity error naming the file on a bad magic, truncated payload or
    /// header/payload size mismatch.
    static EnsembleStore read(const std::filesystem::path& path);

private:
    LatticeDomain domain_;
    json header_;
    std::size_t count_ = 0;
    std::vector<double> data_;
};

/// Reads only the header of an ensemble file.
json read_ensemble_header(const std::filesystem::path& path);

/// Streams fields to disk as they are produced, in index order.
class EnsembleWriter {
public:
    EnsembleWriter(const std::filesystem::path& path, LatticeDomain domain, json header, std::size_t count);
    void write(const FieldState& field);
    /// Throws if fewer than `count` fields were written.
    void close();

private:
    std::filesystem::path path_;
    std::ofstream out_;
    LatticeDomain domain_;
    std::size_t expected_ = 0;
    std::size_t written_ = 0;
};

/// Anything that can deliver a sequence of independent fields: a store in
/// memory, a file streamed from disk, or a sampler generating on demand.
/// visit() calls fn(index, field) exactly once per index; calls may run
/// concurrently on different indices, so fn must only write to per-index
/// state.
class EnsembleSource {
public:
    virtual ~EnsembleSource() = default;
    virtual const LatticeDomain& domain() const = 0;
    virtual std::size_t count() const = 0;
    virtual json provenance() const = 0;
    virtual void visit(const std::function<void(std::size_t, const FieldState&)>& fn) = 0;
};

class StoreSource final : public EnsembleSource {
public:
    explicit StoreSource(const EnsembleStore& store, int threads = 1) : store_(store), threads_(threads) {}
    const LatticeDomain& domain() const override { return store_.domain(); }
    std::size_t count() const override { return store_.count(); }
    json provenance() const override { return store_.header(); }
    void visit(const std::function<void(std::size_t, const FieldState&)>& fn) override;

private:
    const EnsembleStore& store_;
    int threads_;
};

class FileSource final : public EnsembleSource {
public:
    explicit FileSource(std::filesystem::path path, int threads = 1);
    const LatticeDomain& domain() const override { return domain_; }
    std::size_t count() const override { return count_; }
    json provenance() const override { return header_; }
    void visit(const std::function<void(std::size_t, const FieldState&)>& fn) override;

private:
    std::filesystem::path path_;
    json header_;
    LatticeDomain domain_{1};
    std::size_t count_ = 0;
    int threads_;
};

/// Generates samples with run_chains on every visit (same seed, same fields).
class SamplerSource final : public EnsembleSource {
public:
    SamplerSource(FieldState initial, Potential p, SamplerConfig cfg);
    const LatticeDomain& domain() const override { return initial_.domain(); }
    std::size_t count() const override { return cfg_.n_samples; }
    json provenance() const override;
    void visit(const std::function<void(std::size_t, const FieldState&)>& fn) override;
    /// Diagnostics of the most recent visit.
    const ChainDiagnostics& diagnostics() const noexcept { return diag_; }

private:
    FieldState initial_;
    Potential p_;
    SamplerConfig cfg_;
    ChainDiagnostics diag_;
};

/// Per-sample statistic in index order: out[i] = fn(field i).
template <class R, class F>
std::vector<R> map_samples(EnsembleSource& source, F&& fn) {
    std::vector<R> out(source.count());
    source.visit([&](std::size_t i, const FieldState& f) { out[i] = fn(f); });
    return out;
}

/// Draws cfg.n_samples fields (see run_chains) into memory with a header
/// holding the potential, resolved config, seeds and diagnostics.
EnsembleStore sample_ensemble(const LatticeDomain& domain, const Potential& p, const SamplerConfig& cfg);
/// Same with non-zero Dirichlet data taken from `initial`.
EnsembleStore sample_ensemble(const FieldState& initial, const Potential& p, const SamplerConfig& cfg);

/// Chain diagnostics of a stored ensemble (samples in stored order; a trace
/// per chain when the header records several chains).
ChainDiagnostics diagnostics(const EnsembleStore& store);

} // namespace glf
