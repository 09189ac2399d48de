#include "metadet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "metadet/io.hpp"

namespace metadet {

uint64_t Rng::next_u64() {
    // splitmix64
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 0;
    while (u1 <= 1e-12) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2 * M_PI * u2);
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
}

uint64_t Rng::mix(uint64_t a, uint64_t b) {
    uint64_t z = a * 0xff51afd7ed558ccdull + b + 0x2545f4914f6cdd1dull;
    z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ull;
    return z ^ (z >> 33);
}

void SynthConfig::validate() const {
    if (canvas_size < 16) throw numeric_error("synth config: canvas too small");
    if (motion_sigma < 0 || scale_sigma < 0 || appearance_sigma < 0)
        throw numeric_error("synth config: sigmas must be non-negative");
    if (sequence_length < 2) throw numeric_error("synth config: sequence length must be >= 2");
    if (min_object_size <= 2 || max_object_size < min_object_size)
        throw numeric_error("synth config: bad object size range");
    if (shapes.empty()) throw numeric_error("synth config: no shapes enabled");
}

namespace {

struct BgSpec {
    double base[3];
    double amp[3];
    double fx[3], fy[3], phase[3];
};

struct ObjSpec {
    ObjectShape shape;
    double color[3];
    double tex_amp;
    double tex_freq;
    double tex_phase;
    double aspect;  // h = aspect * w
};

struct ObjState {
    double cx, cy, w, h;
    double color[3];
};

BgSpec make_bg(Rng& rng) {
    BgSpec bg;
    for (int c = 0; c < 3; ++c) {
        bg.base[c] = rng.uniform(0.25, 0.6);
        bg.amp[c] = rng.uniform(0.05, 0.18);
        bg.fx[c] = rng.uniform(0.02, 0.09);
        bg.fy[c] = rng.uniform(0.02, 0.09);
        bg.phase[c] = rng.uniform(0, 2 * M_PI);
    }
    return bg;
}

ObjSpec make_obj(const SynthConfig& cfg, Rng& rng) {
    ObjSpec o;
    o.shape = cfg.shapes[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(cfg.shapes.size()) - 1))];
    for (int c = 0; c < 3; ++c) o.color[c] = rng.uniform(0.1, 0.95);
    o.tex_amp = rng.uniform(0.02, 0.12);
    o.tex_freq = rng.uniform(0.2, 0.7);
    o.tex_phase = rng.uniform(0, 2 * M_PI);
    o.aspect = rng.uniform(0.6, 1.6);
    return o;
}

// Signed distance (negative inside), normalized so that ~1px soft edges work
// across shapes.
double shape_sdf(ObjectShape s, double x, double y, double hw, double hh) {
    switch (s) {
        case ObjectShape::kRectangle: {
            double dx = std::fabs(x) - hw, dy = std::fabs(y) - hh;
            double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0);
            return std::sqrt(ox * ox + oy * oy) + std::min(std::max(dx, dy), 0.0);
        }
        case ObjectShape::kEllipse: {
            double k = std::sqrt((x * x) / (hw * hw) + (y * y) / (hh * hh));
            return (k - 1.0) * std::min(hw, hh);
        }
        case ObjectShape::kTriangle: {
            // isoceles triangle inscribed in the box: apex up
            double fy = (y + hh) / (2 * hh);           // 0 at top, 1 at bottom
            double half_width_at = hw * fy;            // linear flanks
            double d1 = std::fabs(x) - half_width_at;  // horizontal distance to flank
            double d2 = y - hh;                        // below base
            double d3 = -hh - y;                       // above apex
            return std::max({d1 * 0.8, d2, d3});
        }
    }
    return 1.0;
}

double smooth_cov(double sdf) {
    // 1 inside, 0 outside, linear ramp across 1.5px
    return std::clamp(0.5 - sdf / 1.5, 0.0, 1.0);
}

void draw_object(Tensor& frame, Tensor* mask, const ObjSpec& spec, const ObjState& st,
                 int64_t size) {
    double hw = st.w / 2, hh = st.h / 2;
    int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(st.cx - hw - 2));
    int64_t x1 = std::min<int64_t>(size - 1, static_cast<int64_t>(st.cx + hw + 2));
    int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(st.cy - hh - 2));
    int64_t y1 = std::min<int64_t>(size - 1, static_cast<int64_t>(st.cy + hh + 2));
    auto& data = frame.mutable_data();
    for (int64_t py = y0; py <= y1; ++py) {
        for (int64_t px = x0; px <= x1; ++px) {
            double x = (static_cast<double>(px) + 0.5) - st.cx;
            double y = (static_cast<double>(py) + 0.5) - st.cy;
            double cov = smooth_cov(shape_sdf(spec.shape, x, y, hw, hh));
            if (cov <= 0) continue;
            double tex = spec.tex_amp * std::sin(spec.tex_freq * (x + 2 * y) + spec.tex_phase);
            for (int c = 0; c < 3; ++c) {
                double v = std::clamp(st.color[c] + tex, 0.0, 1.0);
                size_t idx = static_cast<size_t>(c * size * size + py * size + px);
                data[idx] = data[idx] * (1 - cov) + v * cov;
            }
            if (mask && cov > 0.5)
                mask->mutable_data()[static_cast<size_t>(py * size + px)] = 1.0;
        }
    }
}

Tensor render_background(const BgSpec& bg, int64_t size) {
    Tensor frame({3, size, size});
    auto& data = frame.mutable_data();
    for (int c = 0; c < 3; ++c)
        for (int64_t y = 0; y < size; ++y)
            for (int64_t x = 0; x < size; ++x)
                data[static_cast<size_t>(c * size * size + y * size + x)] = std::clamp(
                    bg.base[c] + bg.amp[c] * std::sin(bg.fx[c] * static_cast<double>(x) +
                                                      bg.fy[c] * static_cast<double>(y) +
                                                      bg.phase[c]),
                    0.0, 1.0);
    return frame;
}

// Reflects v into [lo, hi].
double reflect(double v, double lo, double hi) {
    if (hi <= lo) return (lo + hi) / 2;
    double span = hi - lo;
    double t = std::fmod(v - lo, 2 * span);
    if (t < 0) t += 2 * span;
    return t <= span ? lo + t : hi - (t - span);
}

struct SceneWalk {
    BgSpec bg;
    ObjSpec target_spec;
    std::vector<ObjSpec> distractor_specs;
    std::vector<std::vector<ObjState>> states;  // per frame: target then distractors
};

SceneWalk build_walk(const SynthConfig& cfg, int64_t instance_id) {
    cfg.validate();
    double sz = static_cast<double>(cfg.canvas_size);
    Rng rng(Rng::mix(cfg.seed, static_cast<uint64_t>(instance_id) * 0x51ed2701));
    SceneWalk scene;
    scene.bg = make_bg(rng);
    scene.target_spec = make_obj(cfg, rng);

    auto spawn = [&](const ObjSpec& spec, const std::vector<ObjState>& existing) {
        ObjState st;
        st.w = rng.uniform(cfg.min_object_size, cfg.max_object_size);
        st.h = std::clamp(st.w * spec.aspect, cfg.min_object_size, cfg.max_object_size);
        for (int attempt = 0; attempt < 64; ++attempt) {
            st.cx = rng.uniform(st.w / 2, sz - st.w / 2);
            st.cy = rng.uniform(st.h / 2, sz - st.h / 2);
            bool clash = false;
            for (const auto& e : existing)
                clash = clash || (std::fabs(st.cx - e.cx) < (st.w + e.w) / 2 + 4 &&
                                  std::fabs(st.cy - e.cy) < (st.h + e.h) / 2 + 4);
            if (!clash) break;
        }
        for (int c = 0; c < 3; ++c) st.color[c] = spec.color[c];
        return st;
    };

    std::vector<ObjState> cur;
    cur.push_back(spawn(scene.target_spec, cur));
    for (int64_t d = 0; d < cfg.distractor_count; ++d) {
        scene.distractor_specs.push_back(make_obj(cfg, rng));
        cur.push_back(spawn(scene.distractor_specs.back(), cur));
    }

    for (int64_t f = 0; f < cfg.sequence_length; ++f) {
        if (f > 0) {
            for (auto& st : cur) {
                st.cx += rng.normal() * cfg.motion_sigma;
                st.cy += rng.normal() * cfg.motion_sigma;
                double ds = std::exp(rng.normal() * cfg.scale_sigma);
                st.w = std::clamp(st.w * ds, cfg.min_object_size, cfg.max_object_size);
                st.h = std::clamp(st.h * ds, cfg.min_object_size, cfg.max_object_size);
                st.cx = reflect(st.cx, st.w / 2, sz - st.w / 2);
                st.cy = reflect(st.cy, st.h / 2, sz - st.h / 2);
                for (int c = 0; c < 3; ++c)
                    st.color[c] = std::clamp(st.color[c] + rng.normal() * cfg.appearance_sigma,
                                             0.05, 0.95);
            }
        }
        scene.states.push_back(cur);
    }
    return scene;
}

Tensor render_scene_frame(const SynthConfig& cfg, const SceneWalk& scene, int64_t f,
                          Tensor* mask) {
    Tensor frame = render_background(scene.bg, cfg.canvas_size);
    const auto& states = scene.states[static_cast<size_t>(f)];
    draw_object(frame, mask, scene.target_spec, states[0], cfg.canvas_size);
    for (size_t d = 0; d < scene.distractor_specs.size(); ++d)
        draw_object(frame, mask, scene.distractor_specs[d], states[d + 1], cfg.canvas_size);
    frame.finalize();
    return frame;
}

}  // namespace

Sequence generate_sequence(const SynthConfig& cfg, int64_t instance_id) {
    SceneWalk scene = build_walk(cfg, instance_id);
    Sequence seq;
    seq.instance_id = instance_id;
    for (int64_t f = 0; f < cfg.sequence_length; ++f) {
        seq.frames.push_back(render_scene_frame(cfg, scene, f, nullptr));
        const ObjState& st = scene.states[static_cast<size_t>(f)][0];
        seq.gt.push_back({st.cx, st.cy, st.w, st.h});
    }
    return seq;
}

Tensor render_object_mask(const SynthConfig& cfg, int64_t instance_id, int64_t frame_idx) {
    SceneWalk scene = build_walk(cfg, instance_id);
    if (frame_idx < 0 || frame_idx >= cfg.sequence_length)
        throw numeric_error("render_object_mask: frame index out of range");
    Tensor mask = Tensor::zeros({1, cfg.canvas_size, cfg.canvas_size});
    render_scene_frame(cfg, scene, frame_idx, &mask);
    return mask;
}

BoundingBox PatchTransform::apply(const BoundingBox& b) const {
    return {(b.cx - off_x) * scale, (b.cy - off_y) * scale, b.w * scale, b.h * scale};
}

BoundingBox PatchTransform::invert(const BoundingBox& b) const {
    return {b.cx / scale + off_x, b.cy / scale + off_y, b.w / scale, b.h / scale};
}

std::pair<Tensor, PatchTransform> crop_search_region_scaled(const Tensor& frame,
                                                            const BoundingBox& box,
                                                            int64_t out_size, double side_scale) {
    if (!box.valid()) throw numeric_error("crop_search_region: degenerate box");
    if (frame.rank() != 3 || frame.shape()[0] != 3)
        throw numeric_error("crop_search_region: frame must be [3,H,W]");
    int64_t h = frame.shape()[1], w = frame.shape()[2];

    // context rule: side 2*sqrt((w+p)(h+p)) with p=(w+h)/4, giving 3w for a
    // square box (96 px for w=h=32)
    double p = (box.w + box.h) / 4;
    double side = 2.0 * std::sqrt((box.w + p) * (box.h + p)) * side_scale;
    PatchTransform t;
    t.scale = static_cast<double>(out_size) / side;
    t.off_x = box.cx - side / 2;
    t.off_y = box.cy - side / 2;

    double mean[3] = {0, 0, 0};
    const auto& fd = frame.data();
    int64_t plane = h * w;
    for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int64_t i = 0; i < plane; ++i) acc += fd[static_cast<size_t>(c * plane + i)];
        mean[c] = acc / static_cast<double>(plane);
    }

    Tensor patch({3, out_size, out_size});
    auto& pd = patch.mutable_data();
    auto sample = [&](int c, double fx, double fy) {
        // bilinear over pixel centers; anything outside blends to frame mean
        double gx = fx - 0.5, gy = fy - 0.5;
        int64_t x0 = static_cast<int64_t>(std::floor(gx)), y0 = static_cast<int64_t>(std::floor(gy));
        double ax = gx - static_cast<double>(x0), ay = gy - static_cast<double>(y0);
        auto px = [&](int64_t xx, int64_t yy) {
            if (xx < 0 || xx >= w || yy < 0 || yy >= h) return mean[c];
            return fd[static_cast<size_t>(c * plane + yy * w + xx)];
        };
        double top = px(x0, y0) * (1 - ax) + px(x0 + 1, y0) * ax;
        double bot = px(x0, y0 + 1) * (1 - ax) + px(x0 + 1, y0 + 1) * ax;
        return top * (1 - ay) + bot * ay;
    };
    for (int c = 0; c < 3; ++c)
        for (int64_t py = 0; py < out_size; ++py)
            for (int64_t px = 0; px < out_size; ++px) {
                double fx = t.off_x + (static_cast<double>(px) + 0.5) / t.scale;
                double fy = t.off_y + (static_cast<double>(py) + 0.5) / t.scale;
                pd[static_cast<size_t>((c * out_size + py) * out_size + px)] = sample(c, fx, fy);
            }
    patch.finalize();
    return {std::move(patch), t};
}

std::pair<Tensor, PatchTransform> crop_search_region(const Tensor& frame, const BoundingBox& box,
                                                     int64_t out_size) {
    return crop_search_region_scaled(frame, box, out_size, 1.0);
}

std::vector<Sample> make_support_set(const Tensor& frame, const BoundingBox& box,
                                     int64_t out_size) {
    std::vector<Sample> out;
    for (double f : {1.0 / 1.08, 1.0, 1.08}) {
        auto [patch, t] = crop_search_region_scaled(frame, box, out_size, f);
        out.push_back({std::move(patch), t.apply(box)});
    }
    return out;
}

Task sample_task(const std::vector<Sequence>& pool, const SynthConfig& cfg, int64_t out_size,
                 Rng& rng) {
    if (pool.size() < 2) throw numeric_error("sample_task: pool must contain at least 2 sequences");
    int64_t si = rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1);
    const Sequence& seq = pool[static_cast<size_t>(si)];
    int64_t n = static_cast<int64_t>(seq.frames.size());
    int64_t support_idx = rng.uniform_int(0, n - 1);

    Task task;
    task.support = make_support_set(seq.frames[static_cast<size_t>(support_idx)],
                                    seq.gt[static_cast<size_t>(support_idx)], out_size);

    bool same_seq = rng.uniform() < 0.8;
    if (same_seq && n >= 2) {
        int64_t ti = rng.uniform_int(0, n - 2);
        if (ti >= support_idx) ++ti;  // different frame of the same sequence
        auto [patch, t] = crop_search_region(seq.frames[static_cast<size_t>(ti)],
                                             seq.gt[static_cast<size_t>(ti)], out_size);
        task.target.push_back({std::move(patch), t.apply(seq.gt[static_cast<size_t>(ti)])});
    } else {
        // same instance rendered over a different sequence's background
        int64_t oj = rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 2);
        if (oj >= si) ++oj;
        const Sequence& other = pool[static_cast<size_t>(oj)];

        SynthConfig one = cfg;
        one.distractor_count = 0;
        SceneWalk src = build_walk(one, seq.instance_id);
        SceneWalk dst = build_walk(one, other.instance_id);

        double sz = static_cast<double>(cfg.canvas_size);
        ObjState st = src.states[0][0];
        st.cx = rng.uniform(st.w / 2 + 1, sz - st.w / 2 - 1);
        st.cy = rng.uniform(st.h / 2 + 1, sz - st.h / 2 - 1);
        Tensor frame = render_background(dst.bg, cfg.canvas_size);
        draw_object(frame, nullptr, src.target_spec, st, cfg.canvas_size);
        frame.finalize();
        BoundingBox gt{st.cx, st.cy, st.w, st.h};
        auto [patch, t] = crop_search_region(frame, gt, out_size);
        task.target.push_back({std::move(patch), t.apply(gt)});
    }
    return task;
}

void export_sequence(const std::string& dir, const Sequence& seq) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream meta(dir + "/meta.txt");
    if (!meta) throw numeric_error("cannot write '" + dir + "/meta.txt'");
    meta.precision(17);
    meta << "instance_id=" << seq.instance_id << "\n";
    meta << "length=" << seq.frames.size() << "\n";
    meta << "canvas=" << seq.frames.front().shape()[1] << "\n";
    for (size_t i = 0; i < seq.gt.size(); ++i)
        meta << i << " " << seq.gt[i].cx << " " << seq.gt[i].cy << " " << seq.gt[i].w << " "
             << seq.gt[i].h << "\n";
    char name[32];
    for (size_t i = 0; i < seq.frames.size(); ++i) {
        std::snprintf(name, sizeof(name), "/frame_%05zu.mdt", i);
        write_tensor_file(dir + name, seq.frames[i]);
    }
}

Sequence import_sequence(const std::string& dir) {
    std::ifstream meta(dir + "/meta.txt");
    if (!meta) throw numeric_error("cannot read '" + dir + "/meta.txt'");
    Sequence seq;
    size_t length = 0;
    std::string line;
    while (std::getline(meta, line)) {
        if (line.empty()) continue;
        if (line.find('=') != std::string::npos) {
            auto eq = line.find('=');
            std::string key = line.substr(0, eq), val = line.substr(eq + 1);
            if (key == "instance_id") seq.instance_id = std::stoll(val);
            else if (key == "length") length = static_cast<size_t>(std::stoull(val));
            else if (key != "canvas") throw numeric_error("unknown meta key '" + key + "'");
        } else {
            std::istringstream ls(line);
            size_t idx;
            BoundingBox b;
            ls >> idx >> b.cx >> b.cy >> b.w >> b.h;
            seq.gt.push_back(b);
        }
    }
    char name[32];
    for (size_t i = 0; i < length; ++i) {
        std::snprintf(name, sizeof(name), "/frame_%05zu.mdt", i);
        seq.frames.push_back(read_tensor_file(dir + name));
    }
    if (seq.frames.size() != seq.gt.size())
        throw numeric_error("sequence '" + dir + "': frame/gt count mismatch");
    return seq;
}

}  // namespace metadet
