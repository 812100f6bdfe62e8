#pragma once

// End-to-end orchestration: configuration, synthetic corpus, the
// trace -> graph -> features -> partition -> classify -> place -> simulate
// pipeline, and report rendering.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pgl/dfg.hpp"
#include "pgl/fractal.hpp"
#include "pgl/gae.hpp"
#include "pgl/mapper.hpp"
#include "pgl/sched.hpp"
#include "pgl/trace.hpp"

namespace pgl {

struct PipelineConfig {
    WalkParams walk;
    FeatureKind features = FeatureKind::multifractal;
    PartitionConfig partition;
    MapperConfig mapper;
    PlatformConfig platform;
    std::uint64_t seed = 42;

    /// Checks every section; throws InvalidArgument.
    void validate() const;
    /// Copies the global seed into the per-module seeds (walk, partition).
    PipelineConfig resolved() const;
};

/// Flat `section.key = value` lines, '#' comments. Keys left out keep their
/// defaults; unknown keys are ParseErrors.
PipelineConfig read_config(std::istream& in);
void write_config(const PipelineConfig& config, std::ostream& out);

/// Hashes of the rendered config. `features` covers what node features depend
/// on, `platform` what oracle labels depend on; `full` covers everything.
struct ConfigHashes {
    std::uint64_t full = 0;
    std::uint64_t features = 0;
    std::uint64_t platform = 0;
};
ConfigHashes config_hashes(const PipelineConfig& config);
std::string hex(std::uint64_t value);

enum class CorpusMix { balanced, uniform, parallel, sequential, mixed };
std::string_view to_string(CorpusMix m);
std::optional<CorpusMix> parse_corpus_mix(std::string_view text);

struct CorpusEntry {
    std::string name;
    Pattern pattern = Pattern::mixed;
    std::size_t size = 0;
    std::uint64_t seed = 0;
    Device label = Device::cpu;
    double cpu_time = 0.0;
    double gpu_time = 0.0;
    DynamicDataflowGraph graph;
};

struct Corpus {
    CorpusMix mix = CorpusMix::balanced;
    std::uint64_t seed = 0;
    std::vector<CorpusEntry> entries;
};

/// Inclusive range of the generator's size argument per pattern (loop
/// iterations, chain length, mixed-kernel scale).
std::pair<std::size_t, std::size_t> corpus_size_range(Pattern p);

/// Draws (pattern, size, seed) candidates from the seed and labels each with
/// the cost-model oracle. `balanced` keeps a candidate only while its class
/// holds fewer than half of n, so the classes end up n/2 each; the other
/// mixes keep every candidate. Throws InvalidArgument for n == 0.
Corpus generate_corpus(std::size_t n, CorpusMix mix, std::uint64_t seed, const PlatformConfig& platform);

/// manifest.tsv plus traces/<name>.trace and graphs/<name>.dfg under `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir, const ConfigHashes& hashes);
/// Reads the manifest and graphs back; the platform hash must match.
Corpus read_corpus(const std::filesystem::path& dir, const ConfigHashes& hashes);
std::uint64_t manifest_hash(const Corpus& corpus);

std::vector<LabeledGraph> labeled_graphs(const Corpus& corpus);
/// Computes features for every corpus graph. Multifractal rows of entry i draw
/// from the stream (walk seed, "corpus.features", i).
std::vector<KernelSample> corpus_samples(const Corpus& corpus, FeatureKind kind, const WalkParams& walk);

/// Feature extraction for one graph under the pipeline's feature settings.
RowMatrix graph_features(const DynamicDataflowGraph& g, FeatureKind kind, const WalkParams& walk);

struct KernelReport {
    std::size_t id = 0;
    std::vector<NodeId> nodes;
    Device label = Device::cpu;   // classifier
    Device oracle = Device::cpu;  // cost model on the same cluster
    std::array<double, 2> probabilities{0.5, 0.5};
    double cpu_time = 0.0;
    double gpu_time = 0.0;
    Coord core;
    double start = 0.0;
    double finish = 0.0;
};

struct PipelineReport {
    std::string application;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::size_t nodes = 0;
    std::size_t edges = 0;
    Partition partition;
    std::size_t merged_cycles = 0;  // clusters folded together to break cycles
    std::vector<KernelReport> kernels;
    std::vector<Transfer> transfers;
    std::vector<double> transfer_seconds;
    double makespan = 0.0;
    double baseline_makespan = 0.0;
    double speedup = 0.0;
    double oracle_agreement = 0.0;  // classifier vs cost model over kernels
};

/// Kernels of a partition: clusters in the quotient graph; clusters on a
/// common cycle of the quotient are merged so the kernel graph is a DAG.
struct KernelGraph {
    std::vector<std::vector<NodeId>> members;
    std::vector<Transfer> transfers;  // summed edge bytes between kernels
    std::size_t merged = 0;
};
KernelGraph kernel_graph(const DynamicDataflowGraph& g, const std::vector<int>& assignment);

/// Kernels, classification, placement and simulation for a partitioned graph;
/// fills everything in `report` past the partition. A null model labels each
/// kernel with the cost-model oracle.
void place_partition(PipelineReport& report, const DynamicDataflowGraph& g, const MapperModel* model,
                     const PipelineConfig& config);

/// Runs every stage on `app`. Errors are rethrown as Error with the stage
/// name in front of the message.
PipelineReport run_pipeline(const InstructionTrace& app, const MapperModel& model, const PipelineConfig& config);

std::string report_json(const PipelineReport& report);
std::string cv_report_json(const CvReport& report, const std::vector<KernelSample>& samples, const std::string& config_hash);
/// Table with Accuracy / Precision / Recall / F1 columns.
std::string metrics_table(const std::string& label, const Metrics& m, double accuracy_std);
std::string ablation_json(const std::vector<AblationRow>& rows, const std::string& config_hash);
std::string ablation_table(const std::vector<AblationRow>& rows);

/// Exclusive writer lock on an output directory (`.pgl.lock`). Throws IoError
/// when another writer holds it.
class DirectoryLock {
public:
    explicit DirectoryLock(const std::filesystem::path& dir);
    ~DirectoryLock();
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    std::filesystem::path path_;
};

/// Writes `# pgl config <hash>` followed by `body`; read_stamped returns the
/// body and checks the stamp against `expected` (empty: accept any).
void write_stamped(const std::filesystem::path& path, const std::string& hash, const std::string& body);
std::string read_stamped(const std::filesystem::path& path, const std::string& expected = {});

}  // namespace pgl
