#pragma once

// Analytic CPU/GPU cost model, mesh placement and kernel-DAG simulation.

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pgl/dfg.hpp"

namespace pgl {

enum class Device { cpu = 0, gpu = 1 };

std::string_view to_string(Device d);
std::optional<Device> parse_device(std::string_view text);

/// Defaults follow the evaluated platform: 32 CPU cores at 2.4 GHz with
/// 8 GB/s memory, 32 GPU cores at 575 MHz with 86.4 GB/s, an 8x8 mesh.
struct PlatformConfig {
    std::size_t cpu_cores = 32;
    double cpu_clock_hz = 2.4e9;
    double cpu_memory_bandwidth = 8e9;  // bytes/s
    std::size_t gpu_cores = 32;
    double gpu_clock_hz = 575e6;
    double gpu_memory_bandwidth = 86.4e9;
    double gpu_launch_cycles = 32;
    int mesh_width = 8;
    int mesh_height = 8;
    double link_bytes_per_cycle = 16;
    double noc_clock_hz = 2.4e9;

    /// Throws InvalidArgument for non-positive values or when a device's half
    /// of the mesh cannot hold its cores.
    void validate() const;
    bool operator==(const PlatformConfig&) const = default;
};

/// `key = value` lines; '#' starts a comment. Unknown keys are ParseErrors.
PlatformConfig read_platform(std::istream& in);
void write_platform(const PlatformConfig& p, std::ostream& out);

struct KernelTime {
    double compute = 0.0;  // seconds
    double memory = 0.0;
    double total() const { return compute + memory; }
};

/// CPU: total latency cycles on one fast core. GPU: total latency spread over
/// min(gpu_cores, widest ASAP level) lanes plus the launch overhead. Both add
/// the summed edge bytes over the device's memory bandwidth.
KernelTime estimate_kernel_time(const DynamicDataflowGraph& kernel, Device device, const PlatformConfig& platform);

/// argmin of estimate_kernel_time; ties go to the CPU.
Device oracle_label(const DynamicDataflowGraph& kernel, const PlatformConfig& platform);

struct Coord {
    int x = 0;
    int y = 0;
    auto operator<=>(const Coord&) const = default;
};

/// Row-major rank (y, then x); the placement tie-break order.
inline bool row_major_less(Coord a, Coord b) { return a.y != b.y ? a.y < b.y : a.x < b.x; }

/// |dx| + |dy|. Throws InvalidArgument when either end is off the mesh.
int manhattan_distance(Coord a, Coord b, const PlatformConfig& platform);

/// Cores visited from a to b, x first, then y; both ends included.
std::vector<Coord> xy_route(Coord a, Coord b, const PlatformConfig& platform);

/// Cores of one class in row-major order. CPUs fill the left half of the
/// mesh, GPUs the right half.
std::vector<Coord> device_cores(Device device, const PlatformConfig& platform);

struct KernelSpec {
    std::string name;
    Device device = Device::cpu;
    double cpu_time = 0.0;
    double gpu_time = 0.0;

    double time() const { return device == Device::cpu ? cpu_time : gpu_time; }
};

/// Data flowing from kernel `src` to kernel `dst`; src must finish first.
struct Transfer {
    std::size_t src = 0;
    std::size_t dst = 0;
    double bytes = 0.0;
};

struct Placement {
    Device device = Device::cpu;
    Coord core;
    double time = 0.0;
};

struct PlacementPlan {
    std::vector<Placement> kernels;
    std::vector<double> transfer_seconds;  // parallel to the transfer list
    double makespan = 0.0;
};

/// Seconds to move `bytes` over `hops` links.
double transfer_time(double bytes, int hops, const PlatformConfig& platform);

/// Sum of transfer times for a fixed assignment of cores.
double communication_cost(const std::vector<Coord>& cores, const std::vector<Transfer>& transfers,
                          const PlatformConfig& platform);

/// Greedy placement: kernels in descending transfer volume, each on the free
/// core of its class that minimizes byte-weighted hops to placed partners plus
/// the nearest free spot for each unplaced partner. The first kernel's core is
/// chosen by trying every free core and keeping the cheapest complete plan.
/// Ties fall to row-major order. Throws CapacityError when a class runs out.
PlacementPlan greedy_map(const std::vector<KernelSpec>& kernels, const std::vector<Transfer>& transfers,
                         const PlatformConfig& platform);

struct Schedule {
    std::vector<double> start;
    std::vector<double> finish;
    double makespan = 0.0;
};

/// Earliest start times on a contention-free network. Throws SemanticError
/// when the transfers form a cycle.
Schedule schedule(const PlacementPlan& plan, const std::vector<Transfer>& transfers, const PlatformConfig& platform);

struct SimulationResult {
    PlacementPlan plan;
    Schedule timing;
    double baseline_makespan = 0.0;  // every kernel on the CPU
    double speedup = 0.0;
};

/// greedy_map + schedule for the given labels and for the all-CPU baseline.
SimulationResult simulate(const std::vector<KernelSpec>& kernels, const std::vector<Transfer>& transfers,
                          const PlatformConfig& platform);

}  // namespace pgl
