#include "pgl/sched.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>

#include "pgl/errors.hpp"

namespace pgl {

std::string_view to_string(Device d) { return d == Device::cpu ? "CPU" : "GPU"; }

std::optional<Device> parse_device(std::string_view text) {
    if (text == "CPU" || text == "cpu") return Device::cpu;
    if (text == "GPU" || text == "gpu") return Device::gpu;
    return std::nullopt;
}

namespace {

int cpu_columns(const PlatformConfig& p) { return p.mesh_width / 2; }

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string("platform: ") + name + " must be positive");
}

void require_on_mesh(Coord c, const PlatformConfig& p) {
    if (c.x < 0 || c.y < 0 || c.x >= p.mesh_width || c.y >= p.mesh_height)
        throw InvalidArgument("coordinate (" + std::to_string(c.x) + "," + std::to_string(c.y) + ") is off the " +
                              std::to_string(p.mesh_width) + "x" + std::to_string(p.mesh_height) + " mesh");
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void PlatformConfig::validate() const {
    require_positive(static_cast<double>(cpu_cores), "cpu_cores");
    require_positive(static_cast<double>(gpu_cores), "gpu_cores");
    require_positive(cpu_clock_hz, "cpu_clock_hz");
    require_positive(gpu_clock_hz, "gpu_clock_hz");
    require_positive(cpu_memory_bandwidth, "cpu_memory_bandwidth");
    require_positive(gpu_memory_bandwidth, "gpu_memory_bandwidth");
    require_positive(link_bytes_per_cycle, "link_bytes_per_cycle");
    require_positive(noc_clock_hz, "noc_clock_hz");
    require_positive(mesh_width, "mesh_width");
    require_positive(mesh_height, "mesh_height");
    if (gpu_launch_cycles < 0.0 || !std::isfinite(gpu_launch_cycles))
        throw InvalidArgument("platform: gpu_launch_cycles must be non-negative");
    const auto cpu_slots = static_cast<std::size_t>(cpu_columns(*this) * mesh_height);
    const auto gpu_slots = static_cast<std::size_t>((mesh_width - cpu_columns(*this)) * mesh_height);
    if (cpu_cores > cpu_slots || gpu_cores > gpu_slots)
        throw InvalidArgument("platform: mesh halves hold " + std::to_string(cpu_slots) + " CPU and " +
                              std::to_string(gpu_slots) + " GPU cores");
}

PlatformConfig read_platform(std::istream& in) {
    PlatformConfig p;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
        };
        if (trim(line).empty()) continue;
        if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string text = trim(line.substr(eq + 1));
        char* end = nullptr;
        const double v = std::strtod(text.c_str(), &end);
        if (text.empty() || *end != '\0') throw ParseError(line_no, "value of '" + key + "' is not a number");
        auto count = [&]() -> std::size_t {
            if (v < 0 || v != std::floor(v)) throw ParseError(line_no, "'" + key + "' must be a whole number");
            return static_cast<std::size_t>(v);
        };
        if (key == "cpu_cores") p.cpu_cores = count();
        else if (key == "cpu_clock_hz") p.cpu_clock_hz = v;
        else if (key == "cpu_memory_bandwidth") p.cpu_memory_bandwidth = v;
        else if (key == "gpu_cores") p.gpu_cores = count();
        else if (key == "gpu_clock_hz") p.gpu_clock_hz = v;
        else if (key == "gpu_memory_bandwidth") p.gpu_memory_bandwidth = v;
        else if (key == "gpu_launch_cycles") p.gpu_launch_cycles = v;
        else if (key == "mesh_width") p.mesh_width = static_cast<int>(count());
        else if (key == "mesh_height") p.mesh_height = static_cast<int>(count());
        else if (key == "link_bytes_per_cycle") p.link_bytes_per_cycle = v;
        else if (key == "noc_clock_hz") p.noc_clock_hz = v;
        else throw ParseError(line_no, "unknown platform key '" + key + "'");
    }
    p.validate();
    return p;
}

void write_platform(const PlatformConfig& p, std::ostream& out) {
    out << "cpu_cores = " << p.cpu_cores << '\n'
        << "cpu_clock_hz = " << format_double(p.cpu_clock_hz) << '\n'
        << "cpu_memory_bandwidth = " << format_double(p.cpu_memory_bandwidth) << '\n'
        << "gpu_cores = " << p.gpu_cores << '\n'
        << "gpu_clock_hz = " << format_double(p.gpu_clock_hz) << '\n'
        << "gpu_memory_bandwidth = " << format_double(p.gpu_memory_bandwidth) << '\n'
        << "gpu_launch_cycles = " << format_double(p.gpu_launch_cycles) << '\n'
        << "mesh_width = " << p.mesh_width << '\n'
        << "mesh_height = " << p.mesh_height << '\n'
        << "link_bytes_per_cycle = " << format_double(p.link_bytes_per_cycle) << '\n'
        << "noc_clock_hz = " << format_double(p.noc_clock_hz) << '\n';
}

KernelTime estimate_kernel_time(const DynamicDataflowGraph& kernel, Device device, const PlatformConfig& platform) {
    if (kernel.empty()) throw InvalidArgument("estimate_kernel_time: empty kernel");
    double cycles = 0.0;
    for (const auto& n : kernel.nodes()) cycles += n.latency;
    double bytes = 0.0;
    for (const auto& e : kernel.edges()) bytes += e.weight;

    KernelTime t;
    if (device == Device::cpu) {
        t.compute = cycles / platform.cpu_clock_hz;
        t.memory = bytes / platform.cpu_memory_bandwidth;
    } else {
        const double lanes =
            static_cast<double>(std::min<std::size_t>(platform.gpu_cores, std::max<std::size_t>(1, max_level_width(kernel))));
        t.compute = (cycles / lanes + platform.gpu_launch_cycles) / platform.gpu_clock_hz;
        t.memory = bytes / platform.gpu_memory_bandwidth;
    }
    return t;
}

Device oracle_label(const DynamicDataflowGraph& kernel, const PlatformConfig& platform) {
    const double cpu = estimate_kernel_time(kernel, Device::cpu, platform).total();
    const double gpu = estimate_kernel_time(kernel, Device::gpu, platform).total();
    return gpu < cpu ? Device::gpu : Device::cpu;
}

int manhattan_distance(Coord a, Coord b, const PlatformConfig& platform) {
    require_on_mesh(a, platform);
    require_on_mesh(b, platform);
    return std::abs(a.x - b.x) + std::abs(a.y - b.y);
}

std::vector<Coord> xy_route(Coord a, Coord b, const PlatformConfig& platform) {
    require_on_mesh(a, platform);
    require_on_mesh(b, platform);
    std::vector<Coord> path{a};
    Coord c = a;
    while (c.x != b.x) {
        c.x += b.x > c.x ? 1 : -1;
        path.push_back(c);
    }
    while (c.y != b.y) {
        c.y += b.y > c.y ? 1 : -1;
        path.push_back(c);
    }
    return path;
}

std::vector<Coord> device_cores(Device device, const PlatformConfig& platform) {
    platform.validate();
    const int x0 = device == Device::cpu ? 0 : cpu_columns(platform);
    const int x1 = device == Device::cpu ? cpu_columns(platform) : platform.mesh_width;
    const auto wanted = device == Device::cpu ? platform.cpu_cores : platform.gpu_cores;
    std::vector<Coord> out;
    for (int y = 0; y < platform.mesh_height && out.size() < wanted; ++y)
        for (int x = x0; x < x1 && out.size() < wanted; ++x) out.push_back({x, y});
    return out;
}

double transfer_time(double bytes, int hops, const PlatformConfig& platform) {
    return bytes * hops / platform.link_bytes_per_cycle / platform.noc_clock_hz;
}

double communication_cost(const std::vector<Coord>& cores, const std::vector<Transfer>& transfers,
                          const PlatformConfig& platform) {
    double total = 0.0;
    for (const auto& t : transfers) {
        if (t.src >= cores.size() || t.dst >= cores.size()) throw InvalidArgument("transfer names an unknown kernel");
        total += transfer_time(t.bytes, manhattan_distance(cores[t.src], cores[t.dst], platform), platform);
    }
    return total;
}

namespace {

bool cheaper(double cost, double best) {
    return std::isinf(best) ? cost < best : cost < best - 1e-12 * std::max(1.0, std::abs(best));
}

// Places every kernel after the first, which sits at `anchor`.
std::vector<Coord> greedy_from(const std::vector<KernelSpec>& kernels, const std::vector<std::size_t>& order,
                               const std::vector<std::vector<double>>& bytes, Coord anchor,
                               const std::vector<std::vector<Coord>>& pools, const PlatformConfig& platform) {
    const auto n = kernels.size();
    std::vector<Coord> cores(n);
    std::vector<bool> placed(n, false);
    std::vector<Coord> used{anchor};
    auto is_free = [&](Coord c) { return std::find(used.begin(), used.end(), c) == used.end(); };
    cores[order[0]] = anchor;
    placed[order[0]] = true;

    for (std::size_t step = 1; step < n; ++step) {
        const auto k = order[step];
        const auto& pool = pools[static_cast<int>(kernels[k].device)];
        double best = std::numeric_limits<double>::infinity();
        Coord pick{-1, -1};
        for (Coord c : pool) {
            if (!is_free(c)) continue;
            double cost = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == k || bytes[k][j] == 0.0) continue;
                if (placed[j]) {
                    cost += bytes[k][j] * manhattan_distance(c, cores[j], platform);
                    continue;
                }
                // Unplaced partner: the closest spot it could still take.
                int nearest = std::numeric_limits<int>::max();
                for (Coord o : pools[static_cast<int>(kernels[j].device)])
                    if (o != c && is_free(o)) nearest = std::min(nearest, manhattan_distance(c, o, platform));
                if (nearest != std::numeric_limits<int>::max()) cost += bytes[k][j] * nearest;
            }
            if (cheaper(cost, best)) {
                best = cost;
                pick = c;
            }
        }
        cores[k] = pick;
        placed[k] = true;
        used.push_back(pick);
    }
    return cores;
}

}  // namespace

PlacementPlan greedy_map(const std::vector<KernelSpec>& kernels, const std::vector<Transfer>& transfers,
                         const PlatformConfig& platform) {
    platform.validate();
    const auto n = kernels.size();
    PlacementPlan plan;
    if (n == 0) return plan;

    const std::vector<std::vector<Coord>> pools{device_cores(Device::cpu, platform),
                                                device_cores(Device::gpu, platform)};
    for (Device d : {Device::cpu, Device::gpu}) {
        const auto need = static_cast<std::size_t>(
            std::count_if(kernels.begin(), kernels.end(), [d](const KernelSpec& k) { return k.device == d; }));
        if (need > pools[static_cast<int>(d)].size())
            throw CapacityError(std::to_string(need) + " " + std::string(to_string(d)) + " kernels exceed " +
                                std::to_string(pools[static_cast<int>(d)].size()) + " cores");
    }

    std::vector<std::vector<double>> bytes(n, std::vector<double>(n, 0.0));
    std::vector<double> volume(n, 0.0);
    for (const auto& t : transfers) {
        if (t.src >= n || t.dst >= n) throw InvalidArgument("transfer names an unknown kernel");
        if (t.src == t.dst) throw InvalidArgument("transfer from a kernel to itself");
        bytes[t.src][t.dst] += t.bytes;
        bytes[t.dst][t.src] += t.bytes;
        volume[t.src] += t.bytes;
        volume[t.dst] += t.bytes;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return volume[a] > volume[b]; });

    std::vector<Coord> best_cores;
    double best_cost = std::numeric_limits<double>::infinity();
    for (Coord anchor : pools[static_cast<int>(kernels[order[0]].device)]) {
        auto cores = greedy_from(kernels, order, bytes, anchor, pools, platform);
        const double cost = communication_cost(cores, transfers, platform);
        if (cheaper(cost, best_cost)) {
            best_cost = cost;
            best_cores = std::move(cores);
        }
    }

    for (std::size_t k = 0; k < n; ++k) plan.kernels.push_back({kernels[k].device, best_cores[k], kernels[k].time()});
    for (const auto& t : transfers)
        plan.transfer_seconds.push_back(
            transfer_time(t.bytes, manhattan_distance(best_cores[t.src], best_cores[t.dst], platform), platform));
    plan.makespan = schedule(plan, transfers, platform).makespan;
    return plan;
}

Schedule schedule(const PlacementPlan& plan, const std::vector<Transfer>& transfers, const PlatformConfig& platform) {
    const auto n = plan.kernels.size();
    std::vector<std::vector<std::size_t>> incoming(n), outgoing(n);
    for (std::size_t i = 0; i < transfers.size(); ++i) {
        const auto& t = transfers[i];
        if (t.src >= n || t.dst >= n) throw InvalidArgument("transfer names an unknown kernel");
        incoming[t.dst].push_back(i);
        outgoing[t.src].push_back(i);
    }
    std::vector<std::size_t> pending(n);
    std::queue<std::size_t> ready;
    for (std::size_t k = 0; k < n; ++k)
        if ((pending[k] = incoming[k].size()) == 0) ready.push(k);

    Schedule s;
    s.start.assign(n, 0.0);
    s.finish.assign(n, 0.0);
    std::size_t done = 0;
    while (!ready.empty()) {
        const auto k = ready.front();
        ready.pop();
        ++done;
        for (auto i : incoming[k]) {
            const auto& t = transfers[i];
            const double hop_time = i < plan.transfer_seconds.size()
                                        ? plan.transfer_seconds[i]
                                        : transfer_time(t.bytes,
                                                        manhattan_distance(plan.kernels[t.src].core,
                                                                           plan.kernels[t.dst].core, platform),
                                                        platform);
            s.start[k] = std::max(s.start[k], s.finish[t.src] + hop_time);
        }
        s.finish[k] = s.start[k] + plan.kernels[k].time;
        s.makespan = std::max(s.makespan, s.finish[k]);
        for (auto i : outgoing[k])
            if (--pending[transfers[i].dst] == 0) ready.push(transfers[i].dst);
    }
    if (done != n) throw SemanticError("kernel dependency graph has a cycle");
    return s;
}

SimulationResult simulate(const std::vector<KernelSpec>& kernels, const std::vector<Transfer>& transfers,
                          const PlatformConfig& platform) {
    SimulationResult r;
    r.plan = greedy_map(kernels, transfers, platform);
    r.timing = schedule(r.plan, transfers, platform);
    auto baseline = kernels;
    for (auto& k : baseline) k.device = Device::cpu;
    r.baseline_makespan = schedule(greedy_map(baseline, transfers, platform), transfers, platform).makespan;
    r.speedup = r.timing.makespan > 0.0 ? r.baseline_makespan / r.timing.makespan : 1.0;
    return r;
}

}  // namespace pgl
