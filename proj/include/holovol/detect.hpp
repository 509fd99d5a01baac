#pragma once

#include <queue>

#include "holovol/reconstruct.hpp"

namespace holovol {

// Boolean particle mask of one reconstructed frame.
struct FrameMask {
    MaskGrid mask;
    int frame_index = 0;
};

// One particle followed through consecutive frames. Regions hold flat
// pixel indices into the reconstruction grid, one region per frame.
struct TraceFrame {
    int frame_index = 0;
    double timestamp_s = 0.0;
    std::vector<int> region;  // sorted flat indices
};

struct ParticleTrace {
    int id = 0;
    std::vector<TraceFrame> frames;
    double centroid_x_um = 0.0;
    double centroid_y_um = 0.0;
};

namespace detail {

inline double median_inplace(std::vector<double>& v) {
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    return v[mid];
}

// Marks samples deviating from the robust center by more than
// sigma * (1.4826 MAD). A degenerate scale (constant channel) marks
// nothing, so flat fields never light up.
inline void flag_channel_outliers(const std::vector<double>& values,
                                  double sigma, MaskGrid& into) {
    std::vector<double> tmp = values;
    const double med = median_inplace(tmp);
    for (size_t i = 0; i < values.size(); ++i)
        tmp[i] = std::abs(values[i] - med);
    const double scale = 1.4826 * median_inplace(tmp);
    if (scale < 1e-12 * std::max(1.0, std::abs(med)))
        return;
    for (size_t i = 0; i < values.size(); ++i)
        if (std::abs(values[i] - med) > sigma * scale)
            into[i] = true;
}

// Closing = dilation then erosion, 3x3 square element. Outside the image
// counts as background for dilation and as foreground for erosion, so
// blobs touching the border are not eaten away.
inline MaskGrid close3x3(const MaskGrid& in) {
    const int rows = in.rows(), cols = in.cols();
    MaskGrid dil(rows, cols, false);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            bool any = false;
            for (int dr = -1; dr <= 1 && !any; ++dr)
                for (int dc = -1; dc <= 1 && !any; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    any = in.in_bounds(rr, cc) && in(rr, cc);
                }
            dil(r, c) = any;
        }
    MaskGrid out(rows, cols, false);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            bool all = true;
            for (int dr = -1; dr <= 1 && all; ++dr)
                for (int dc = -1; dc <= 1 && all; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (dil.in_bounds(rr, cc))
                        all = dil(rr, cc);
                }
            out(r, c) = all;
        }
    return out;
}

} // namespace detail

// Flags every sample whose real or imaginary part lies more than sigma
// robust deviations from its channel's robust center, then closes
// one-pixel holes. Both channels matter: phase objects move energy into
// the imaginary part while absorbers dent the real part.
inline FrameMask threshold_mask(const RecoveredField& field, int frame_index,
                                double sigma = 5.0) {
    validate_field(field.field);
    require(sigma > 0 && std::isfinite(sigma), ErrorCode::invalid_input,
            "sigma must be positive");
    const size_t n = field.field.grid.size();
    std::vector<double> re(n), im(n);
    for (size_t i = 0; i < n; ++i) {
        re[i] = field.field.grid[i].real();
        im[i] = field.field.grid[i].imag();
    }
    FrameMask out;
    out.frame_index = frame_index;
    out.mask = MaskGrid(field.field.grid.rows(), field.field.grid.cols(),
                        false);
    detail::flag_channel_outliers(re, sigma, out.mask);
    detail::flag_channel_outliers(im, sigma, out.mask);
    out.mask = detail::close3x3(out.mask);
    return out;
}

namespace detail {

struct Component {
    std::vector<int> pixels;  // sorted flat indices
    int r_min = 0, r_max = 0, c_min = 0, c_max = 0;
};

// 8-connected component labeling by flood fill, deterministic scan order.
inline std::vector<Component> label_components(const MaskGrid& mask) {
    const int rows = mask.rows(), cols = mask.cols();
    std::vector<Component> comps;
    std::vector<bool> seen(mask.size(), false);
    std::vector<int> stack;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int idx = r * cols + c;
            if (!mask[idx] || seen[idx])
                continue;
            Component comp;
            comp.r_min = comp.r_max = r;
            comp.c_min = comp.c_max = c;
            stack.assign(1, idx);
            seen[idx] = true;
            while (!stack.empty()) {
                const int cur = stack.back();
                stack.pop_back();
                comp.pixels.push_back(cur);
                const int cr = cur / cols, cc = cur % cols;
                comp.r_min = std::min(comp.r_min, cr);
                comp.r_max = std::max(comp.r_max, cr);
                comp.c_min = std::min(comp.c_min, cc);
                comp.c_max = std::max(comp.c_max, cc);
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int nr = cr + dr, nc = cc + dc;
                        if (nr < 0 || nr >= rows || nc < 0 || nc >= cols)
                            continue;
                        const int nidx = nr * cols + nc;
                        if (mask[nidx] && !seen[nidx]) {
                            seen[nidx] = true;
                            stack.push_back(nidx);
                        }
                    }
            }
            std::sort(comp.pixels.begin(), comp.pixels.end());
            comps.push_back(std::move(comp));
        }
    return comps;
}

inline size_t intersection_count(const Component& a, const Component& b) {
    if (a.r_max < b.r_min || b.r_max < a.r_min || a.c_max < b.c_min ||
        b.c_max < a.c_min)
        return 0;
    size_t inter = 0, ia = 0, ib = 0;
    while (ia < a.pixels.size() && ib < b.pixels.size()) {
        if (a.pixels[ia] < b.pixels[ib])
            ++ia;
        else if (a.pixels[ia] > b.pixels[ib])
            ++ib;
        else {
            ++inter;
            ++ia;
            ++ib;
        }
    }
    return inter;
}

inline double iou(const Component& a, const Component& b) {
    const size_t inter = intersection_count(a, b);
    const size_t uni = a.pixels.size() + b.pixels.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace detail

// Follows particles through the mask stack. Components in consecutive
// frames belong to the same particle when their pixel overlap is at least
// min_overlap IoU; the substrate is static, so no motion model is needed
// and a missing successor means the particle evaporated. A trace only
// continues through one-to-one links: a split or merge ends it at the
// branching frame, and the branched components start traces of their own.
// Chains shorter than min_trace_frames are dropped.
//
// Strong scatterers need one extra rule. Early in a trace the twin-image
// halo can sit above the detection threshold and merge with the droplet
// into one oversized component; when the halo decays the region collapses
// to the bare contact disk in a single frame and IoU drops below the
// threshold even though the new region lies entirely inside the old one.
// Such orphan pairs are re-linked by containment (intersection over the
// smaller area >= 0.8, best match first), and when the collapse is a real
// area cliff (>= 3x) with a full-length tail behind it, the oversized
// leading frames are dropped so the trace starts in the stable regime.
inline std::vector<ParticleTrace> extract_traces(
    const std::vector<FrameMask>& masks, double min_overlap = 0.3,
    int min_trace_frames = 5,
    const std::vector<double>* timestamps = nullptr,
    double pitch_um = 1.0) {
    require(min_overlap > 0 && min_overlap <= 1, ErrorCode::invalid_input,
            "min_overlap must be in (0, 1]");
    require(min_trace_frames >= 1, ErrorCode::invalid_input,
            "min_trace_frames must be >= 1");
    require(static_cast<int>(masks.size()) >= min_trace_frames,
            ErrorCode::invalid_input,
            "fewer masks than the minimum trace length");
    if (timestamps)
        require(timestamps->size() == masks.size(), ErrorCode::invalid_input,
                "timestamp count does not match mask count");

    const int n_frames = static_cast<int>(masks.size());
    std::vector<std::vector<detail::Component>> comps(n_frames);
    for (int f = 0; f < n_frames; ++f)
        comps[f] = detail::label_components(masks[f].mask);

    // Per-frame link tables: for each component, which component of the
    // next frame overlaps it, and how many candidates competed.
    struct Link {
        int next = -1;        // unique successor index, -1 if none
        int n_succ = 0;       // how many successors passed the threshold
        int n_pred = 0;       // how many predecessors point here
    };
    std::vector<std::vector<Link>> links(n_frames);
    for (int f = 0; f < n_frames; ++f)
        links[f].resize(comps[f].size());
    for (int f = 0; f + 1 < n_frames; ++f) {
        for (size_t i = 0; i < comps[f].size(); ++i)
            for (size_t j = 0; j < comps[f + 1].size(); ++j)
                if (detail::iou(comps[f][i], comps[f + 1][j]) >= min_overlap) {
                    links[f][i].n_succ += 1;
                    links[f][i].next = static_cast<int>(j);
                    links[f + 1][j].n_pred += 1;
                }
        // Containment rescue for halo collapse: pair up components that the
        // IoU pass left unmatched on both sides, largest intersection first.
        struct Rescue {
            size_t inter;
            int i, j;
        };
        std::vector<Rescue> rescues;
        for (size_t i = 0; i < comps[f].size(); ++i) {
            if (links[f][i].n_succ > 0)
                continue;
            for (size_t j = 0; j < comps[f + 1].size(); ++j) {
                if (links[f + 1][j].n_pred > 0)
                    continue;
                const size_t inter =
                    detail::intersection_count(comps[f][i], comps[f + 1][j]);
                const size_t smaller = std::min(comps[f][i].pixels.size(),
                                                comps[f + 1][j].pixels.size());
                if (static_cast<double>(inter) >=
                    0.8 * static_cast<double>(smaller))
                    rescues.push_back({inter, static_cast<int>(i),
                                       static_cast<int>(j)});
            }
        }
        std::sort(rescues.begin(), rescues.end(),
                  [](const Rescue& a, const Rescue& b) {
                      if (a.inter != b.inter)
                          return a.inter > b.inter;
                      if (a.i != b.i)
                          return a.i < b.i;
                      return a.j < b.j;
                  });
        for (const auto& r : rescues) {
            if (links[f][r.i].n_succ > 0 || links[f + 1][r.j].n_pred > 0)
                continue;
            links[f][r.i].n_succ = 1;
            links[f][r.i].next = r.j;
            links[f + 1][r.j].n_pred = 1;
        }
    }

    const auto one_to_one = [&](int f, int i) {
        return links[f][i].n_succ == 1 &&
               links[f + 1][links[f][i].next].n_pred == 1;
    };

    std::vector<ParticleTrace> traces;
    const int cols = masks.empty() ? 0 : masks[0].mask.cols();
    std::vector<std::vector<bool>> consumed(n_frames);
    for (int f = 0; f < n_frames; ++f)
        consumed[f].assign(comps[f].size(), false);

    for (int f0 = 0; f0 < n_frames; ++f0)
        for (size_t i0 = 0; i0 < comps[f0].size(); ++i0) {
            if (consumed[f0][i0])
                continue;
            // Only chain heads start traces: no one-to-one link arrives.
            if (f0 > 0) {
                bool has_clean_pred = false;
                for (size_t p = 0; p < comps[f0 - 1].size(); ++p)
                    if (links[f0 - 1][p].next == static_cast<int>(i0) &&
                        one_to_one(f0 - 1, static_cast<int>(p)))
                        has_clean_pred = true;
                if (has_clean_pred)
                    continue;
            }
            ParticleTrace trace;
            int f = f0;
            int i = static_cast<int>(i0);
            while (true) {
                consumed[f][i] = true;
                TraceFrame tf;
                tf.frame_index = masks[f].frame_index;
                tf.timestamp_s = timestamps ? (*timestamps)[f] : 0.0;
                tf.region = comps[f][i].pixels;
                trace.frames.push_back(std::move(tf));
                if (f + 1 >= n_frames || !one_to_one(f, i))
                    break;
                const int ni = links[f][i].next;
                if (consumed[f + 1][ni])
                    break;
                f += 1;
                i = ni;
            }
            // Drop halo-merged leading frames: cut after the last >= 3x area
            // cliff that still leaves a full-length trace behind it.
            size_t start = 0;
            for (size_t p = 0; p + 1 < trace.frames.size(); ++p) {
                const size_t area = trace.frames[p].region.size();
                const size_t next_area = trace.frames[p + 1].region.size();
                if (area >= 3 * next_area &&
                    trace.frames.size() - (p + 1) >=
                        static_cast<size_t>(min_trace_frames))
                    start = p + 1;
            }
            if (start > 0)
                trace.frames.erase(trace.frames.begin(),
                                   trace.frames.begin() +
                                       static_cast<long>(start));
            if (static_cast<int>(trace.frames.size()) >= min_trace_frames)
                traces.push_back(std::move(trace));
        }

    // Stable ids by (first frame, first pixel) and physical centroids over
    // the union of regions.
    std::sort(traces.begin(), traces.end(),
              [](const ParticleTrace& a, const ParticleTrace& b) {
                  if (a.frames[0].frame_index != b.frames[0].frame_index)
                      return a.frames[0].frame_index < b.frames[0].frame_index;
                  return a.frames[0].region[0] < b.frames[0].region[0];
              });
    for (size_t t = 0; t < traces.size(); ++t) {
        traces[t].id = static_cast<int>(t);
        std::vector<int> all;
        for (const auto& tf : traces[t].frames)
            all.insert(all.end(), tf.region.begin(), tf.region.end());
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());
        double sx = 0.0, sy = 0.0;
        for (int idx : all) {
            sx += (idx % cols + 0.5) * pitch_um;
            sy += (idx / cols + 0.5) * pitch_um;
        }
        traces[t].centroid_x_um = sx / static_cast<double>(all.size());
        traces[t].centroid_y_um = sy / static_cast<double>(all.size());
    }
    return traces;
}

// Per-particle time series of complex crops, all frames cut with the same
// window so later phase analysis compares like with like.
struct CropStack {
    int trace_id = 0;
    int r0 = 0, c0 = 0;       // window origin in reconstruction pixels
    int rows = 0, cols = 0;   // window size
    std::vector<ComplexGrid> crops;
    std::vector<std::vector<int>> regions;  // flat indices into the crop
    std::vector<double> timestamps;
    std::vector<int> frame_indices;
};

struct CropWarning {
    int trace_id = 0;
    std::string message;
};

// Cuts the per-trace windows out of the recovered stack: bounding box of
// the union of the trace's regions, padded and clipped to the frame.
// fields[i] must correspond to frame_index i.
inline std::vector<CropStack> crop_sequences(
    const std::vector<ParticleTrace>& traces,
    const std::vector<RecoveredField>& fields, int pad = 16,
    std::vector<CropWarning>* warnings = nullptr) {
    require(pad >= 0, ErrorCode::invalid_input, "pad must be >= 0");
    require(!fields.empty(), ErrorCode::invalid_input, "no fields given");
    const int rows = fields[0].field.grid.rows();
    const int cols = fields[0].field.grid.cols();

    std::vector<CropStack> stacks;
    for (const auto& trace : traces) {
        int r_min = rows, r_max = -1, c_min = cols, c_max = -1;
        for (const auto& tf : trace.frames) {
            require(tf.frame_index >= 0 &&
                        tf.frame_index < static_cast<int>(fields.size()),
                    ErrorCode::invalid_input,
                    "trace references a frame outside the stack");
            for (int idx : tf.region) {
                const int r = idx / cols, c = idx % cols;
                r_min = std::min(r_min, r);
                r_max = std::max(r_max, r);
                c_min = std::min(c_min, c);
                c_max = std::max(c_max, c);
            }
        }
        if (r_max < r_min || c_max < c_min) {
            if (warnings)
                warnings->push_back(
                    {trace.id, "trace has an empty region union, skipped"});
            continue;
        }
        CropStack stack;
        stack.trace_id = trace.id;
        stack.r0 = std::max(0, r_min - pad);
        stack.c0 = std::max(0, c_min - pad);
        const int r1 = std::min(rows - 1, r_max + pad);
        const int c1 = std::min(cols - 1, c_max + pad);
        stack.rows = r1 - stack.r0 + 1;
        stack.cols = c1 - stack.c0 + 1;

        for (const auto& tf : trace.frames) {
            const auto& grid = fields[tf.frame_index].field.grid;
            stack.crops.push_back(grid_crop(grid, stack.r0, stack.c0,
                                            stack.rows, stack.cols));
            std::vector<int> local;
            local.reserve(tf.region.size());
            for (int idx : tf.region) {
                const int r = idx / cols - stack.r0;
                const int c = idx % cols - stack.c0;
                local.push_back(r * stack.cols + c);
            }
            stack.regions.push_back(std::move(local));
            stack.timestamps.push_back(tf.timestamp_s);
            stack.frame_indices.push_back(tf.frame_index);
        }
        stacks.push_back(std::move(stack));
    }
    return stacks;
}

} // namespace holovol
