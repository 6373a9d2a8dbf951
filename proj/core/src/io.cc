#include "ocfusion/io.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ocfusion/error.h"
#include "ocfusion/scenegen.h"

namespace ocfusion {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Files.

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw DataError("error reading " + path.string());
  return os.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw DataError("error writing " + path.string());
}

namespace {

// ---------------------------------------------------------------------------
// Output. Objects are indented; arrays holding only scalars or arrays of
// scalars (RLE runs, weights, matrix rows) stay on one line so scene files
// remain readable.

bool is_flat(const Json& j) {
  if (!j.is_array()) return !j.is_object();
  return std::all_of(j.begin(), j.end(), [](const Json& e) {
    return e.is_primitive() ||
           (e.is_array() && std::all_of(e.begin(), e.end(), [](const Json& x) {
              return x.is_primitive();
            }));
  });
}

void emit(const Json& j, int indent, std::string& out) {
  if (is_flat(j)) {
    out += j.dump();
    return;
  }
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const bool obj = j.is_object();
  out += obj ? '{' : '[';
  if (j.empty()) {
    out += obj ? '}' : ']';
    return;
  }
  bool first = true;
  for (auto it = j.begin(); it != j.end(); ++it) {
    out += first ? "\n" : ",\n";
    first = false;
    out += pad;
    if (obj) {
      out += Json(it.key()).dump();
      out += ": ";
    }
    emit(it.value(), indent + 2, out);
  }
  out += '\n';
  out += std::string(static_cast<std::size_t>(indent), ' ');
  out += obj ? '}' : ']';
}

std::string pretty(const Json& j) {
  std::string out;
  emit(j, 0, out);
  out += '\n';
  return out;
}

Json rle_json(const BinaryMask& m) {
  Json runs = Json::array();
  for (const Run& r : m.runs()) runs.push_back(Json::array({r.start, r.length}));
  return runs;
}

// Runs of the pixels whose value equals `v`, in row-major order.
template <typename T>
Json rle_of_value(const std::vector<T>& values, T v) {
  Json runs = Json::array();
  const std::size_t n = values.size();
  std::size_t p = 0;
  while (p < n) {
    if (values[p] != v) {
      ++p;
      continue;
    }
    std::size_t e = p + 1;
    while (e < n && values[e] == v) ++e;
    runs.push_back(Json::array({static_cast<std::int64_t>(p),
                                static_cast<std::int64_t>(e - p)}));
    p = e;
  }
  return runs;
}

// ---------------------------------------------------------------------------
// Input. A Node pairs a JSON value with its path so that every error names
// the file and the offending field.

struct Node {
  const Json& j;
  std::string path;
  const std::string& source;

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(source + ": " + (path.empty() ? "<root>" : path) + ": " +
                    what);
  }

  Node at(const char* key) const {
    if (!j.is_object()) fail("expected an object");
    auto it = j.find(key);
    if (it == j.end()) fail(std::string("missing field '") + key + "'");
    return {*it, path.empty() ? key : path + "." + key, source};
  }
  bool has(const char* key) const { return j.is_object() && j.contains(key); }
  Node at(std::size_t k) const {
    return {j[k], path + "[" + std::to_string(k) + "]", source};
  }

  const Json& array() const {
    if (!j.is_array()) fail("expected an array");
    return j;
  }
  std::size_t size() const { return array().size(); }

  void only_keys(std::initializer_list<const char*> keys) const {
    if (!j.is_object()) fail("expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) fail("unknown field '" + it.key() + "'");
    }
  }

  std::int64_t integer(std::int64_t lo = INT32_MIN,
                       std::int64_t hi = INT32_MAX) const {
    if (!j.is_number_integer()) fail("expected an integer");
    if (j.is_number_unsigned() &&
        j.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
      fail("integer out of range");
    }
    const auto v = j.get<std::int64_t>();
    if (v < lo || v > hi) {
      fail("value " + std::to_string(v) + " outside [" + std::to_string(lo) +
           ", " + std::to_string(hi) + "]");
    }
    return v;
  }
  std::int32_t int32() const { return static_cast<std::int32_t>(integer()); }
  std::uint64_t uint64() const {
    if (!j.is_number_unsigned()) fail("expected a non-negative integer");
    return j.get<std::uint64_t>();
  }
  double number() const {
    if (!j.is_number()) fail("expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail("non-finite number");
    return v;
  }
  bool boolean() const {
    if (!j.is_boolean()) fail("expected true or false");
    return j.get<bool>();
  }
  std::string string() const {
    if (!j.is_string()) fail("expected a string");
    return j.get<std::string>();
  }

  std::vector<Run> runs() const {
    std::vector<Run> out;
    out.reserve(size());
    for (std::size_t k = 0; k < j.size(); ++k) {
      const Node r = at(k);
      if (r.size() != 2) r.fail("expected a [start, length] pair");
      out.push_back({r.at(std::size_t{0}).int32(), r.at(std::size_t{1}).int32()});
    }
    return out;
  }
  BinaryMask mask(const ImageGrid& grid) const {
    try {
      return BinaryMask::from_runs(grid, runs());
    } catch (const DataError& e) {
      fail(e.what());
    }
  }
};

Json parse(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t stop = std::min(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t k = 0; k < stop; ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw DataError(source + ":" + std::to_string(line) + ":" +
                    std::to_string(col) + ": JSON parse error: " + e.what());
  }
}

void check_version(const Node& root) {
  const auto v = root.at("version").integer();
  if (v != kFormatVersion) {
    root.at("version").fail("unsupported version " + std::to_string(v));
  }
}

ImageGrid read_grid(const Node& n) {
  n.only_keys({"width", "height"});
  const auto w = n.at("width").int32();
  const auto h = n.at("height").int32();
  try {
    return ImageGrid(w, h);
  } catch (const Error& e) {
    n.fail(e.what());
  }
}

Json grid_json(const ImageGrid& g) {
  return Json{{"width", g.width()}, {"height", g.height()}};
}

Json segment_table_json(const std::vector<SegmentInfo>& segments) {
  Json out = Json::array();
  for (const auto& s : segments) {
    Json e{{"segment_id", s.segment_id},
           {"category_id", s.category},
           {"is_thing", s.is_thing}};
    if (s.source_id) e["source_id"] = *s.source_id;
    out.push_back(std::move(e));
  }
  return out;
}

SegmentInfo read_segment_info(const Node& n, bool with_rle) {
  if (with_rle) {
    n.only_keys({"segment_id", "category_id", "is_thing", "source_id", "rle"});
  } else {
    n.only_keys({"segment_id", "category_id", "is_thing", "source_id"});
  }
  SegmentInfo s;
  s.segment_id = static_cast<SegmentId>(n.at("segment_id").integer(1, INT32_MAX));
  s.category = static_cast<ClassId>(n.at("category_id").integer(1, INT32_MAX));
  s.is_thing = n.at("is_thing").boolean();
  if (n.has("source_id")) s.source_id = n.at("source_id").int32();
  return s;
}

void throw_if_invalid(const std::vector<std::string>& problems,
                      const std::string& source, const char* what) {
  if (problems.empty()) return;
  std::string msg = source + ": invalid " + what + ":";
  for (const auto& p : problems) msg += "\n  " + p;
  throw DataError(msg);
}

}  // namespace

// ---------------------------------------------------------------------------
// Scenes.

std::string scene_to_json(const Scene& scene) {
  Json root;
  root["version"] = kFormatVersion;
  root["image_id"] = scene.image_id;
  root["grid"] = grid_json(scene.grid);

  Json catalog = Json::array();
  for (const auto& c : scene.catalog.classes()) {
    catalog.push_back(Json{{"id", c.id}, {"name", c.name}, {"is_thing", c.is_thing}});
  }
  root["catalog"] = std::move(catalog);

  Json proposals = Json::array();
  for (const auto& p : scene.proposals) {
    proposals.push_back(Json{{"proposal_id", p.proposal_id},
                             {"class_id", p.class_id},
                             {"confidence", p.confidence},
                             {"rle", rle_json(p.mask)}});
  }
  root["proposals"] = std::move(proposals);

  std::set<ClassId> labels(scene.semantic.labels.begin(),
                           scene.semantic.labels.end());
  labels.erase(0);
  Json semantic = Json::array();
  for (ClassId c : labels) {
    semantic.push_back(
        Json{{"class_id", c}, {"rle", rle_of_value(scene.semantic.labels, c)}});
  }
  root["semantic"] = std::move(semantic);

  if (scene.gt_instances) {
    Json inst = Json::array();
    for (const auto& g : *scene.gt_instances) {
      inst.push_back(Json{{"instance_id", g.instance_id},
                          {"class_id", g.class_id},
                          {"z_rank", g.z_rank},
                          {"rle", rle_json(g.mask)}});
    }
    root["gt_instances"] = std::move(inst);
  }
  if (scene.gt_panoptic) {
    Json segs = segment_table_json(scene.gt_panoptic->segments);
    for (std::size_t k = 0; k < segs.size(); ++k) {
      segs[k]["rle"] = rle_of_value(scene.gt_panoptic->pixel_segments,
                                    scene.gt_panoptic->segments[k].segment_id);
    }
    root["gt_panoptic"] = Json{{"segments", std::move(segs)}};
  }
  return pretty(root);
}

Scene scene_from_json(const std::string& text, const std::string& source) {
  const Json doc = parse(text, source);
  const Node root{doc, "", source};
  root.only_keys({"version", "image_id", "grid", "catalog", "proposals",
                  "semantic", "gt_instances", "gt_panoptic"});
  check_version(root);

  Scene scene;
  scene.image_id = root.at("image_id").integer(INT64_MIN, INT64_MAX);
  scene.grid = read_grid(root.at("grid"));
  const ImageGrid grid = scene.grid;

  {
    const Node cat = root.at("catalog");
    std::vector<ClassInfo> classes;
    for (std::size_t k = 0; k < cat.size(); ++k) {
      const Node c = cat.at(k);
      c.only_keys({"id", "name", "is_thing"});
      classes.push_back({static_cast<ClassId>(c.at("id").integer()),
                         c.at("name").string(), c.at("is_thing").boolean()});
    }
    try {
      scene.catalog = ClassCatalog(std::move(classes));
    } catch (const DataError& e) {
      cat.fail(e.what());
    }
  }

  const Node props = root.at("proposals");
  for (std::size_t k = 0; k < props.size(); ++k) {
    const Node p = props.at(k);
    p.only_keys({"proposal_id", "class_id", "confidence", "rle"});
    scene.proposals.push_back({p.at("proposal_id").int32(),
                               static_cast<ClassId>(p.at("class_id").integer()),
                               p.at("confidence").number(),
                               p.at("rle").mask(grid)});
  }

  scene.semantic = SemanticMap(grid);
  const Node sem = root.at("semantic");
  for (std::size_t k = 0; k < sem.size(); ++k) {
    const Node s = sem.at(k);
    s.only_keys({"class_id", "rle"});
    const auto cls = static_cast<ClassId>(s.at("class_id").integer(1, INT32_MAX));
    const BinaryMask m = s.at("rle").mask(grid);
    for (const Run& r : m.runs()) {
      for (std::int64_t q = r.start; q < r.end(); ++q) {
        auto& label = scene.semantic.labels[static_cast<std::size_t>(q)];
        if (label != 0) s.fail("pixel " + std::to_string(q) + " labeled twice");
        label = cls;
      }
    }
  }

  if (root.has("gt_instances")) {
    const Node inst = root.at("gt_instances");
    std::vector<GtInstance> out;
    for (std::size_t k = 0; k < inst.size(); ++k) {
      const Node g = inst.at(k);
      g.only_keys({"instance_id", "class_id", "z_rank", "rle"});
      out.push_back({g.at("instance_id").int32(),
                     static_cast<ClassId>(g.at("class_id").integer()),
                     g.at("rle").mask(grid), g.at("z_rank").int32()});
    }
    scene.gt_instances = std::move(out);
  }

  if (root.has("gt_panoptic")) {
    const Node pan = root.at("gt_panoptic");
    pan.only_keys({"segments"});
    const Node segs = pan.at("segments");
    PanopticMap map(grid);
    for (std::size_t k = 0; k < segs.size(); ++k) {
      const Node s = segs.at(k);
      SegmentInfo info = read_segment_info(s, true);
      const BinaryMask m = s.at("rle").mask(grid);
      for (const Run& r : m.runs()) {
        for (std::int64_t q = r.start; q < r.end(); ++q) {
          auto& id = map.pixel_segments[static_cast<std::size_t>(q)];
          if (id != 0) s.fail("pixel " + std::to_string(q) + " assigned twice");
          id = info.segment_id;
        }
      }
      map.segments.push_back(std::move(info));
    }
    scene.gt_panoptic = std::move(map);
  }

  throw_if_invalid(validate(scene), source, "scene");
  return scene;
}

Scene read_scene(const fs::path& path) {
  return scene_from_json(read_text_file(path), path.string());
}

void write_scene(const fs::path& path, const Scene& scene) {
  throw_if_invalid(validate(scene), path.string(), "scene");
  write_text_file(path, scene_to_json(scene));
}

std::vector<fs::path> list_scene_files(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw DataError(dir.string() + " is not a directory");
  }
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.starts_with("scene_") &&
        name.ends_with(".json")) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Generator config and manifest.

std::string config_to_json(const SceneGenConfig& c) {
  Json root;
  root["version"] = kFormatVersion;
  root["width"] = c.width;
  root["height"] = c.height;
  root["thing_classes"] = c.thing_classes;
  root["stuff_classes"] = c.stuff_classes;
  root["min_instances"] = c.min_instances;
  root["max_instances"] = c.max_instances;
  root["shape"] = to_string(c.shape);
  root["min_extent"] = c.min_extent;
  root["max_extent"] = c.max_extent;
  root["confidence_model"] = to_string(c.confidence_model);
  root["confidence_noise"] = c.confidence_noise;
  root["min_confidence"] = c.min_confidence;
  root["max_confidence"] = c.max_confidence;
  root["perturbation"] = Json{{"morph_radius", c.perturbation.morph_radius},
                              {"dropout", c.perturbation.dropout},
                              {"spurious_rate", c.perturbation.spurious_rate},
                              {"label_noise", c.perturbation.label_noise}};
  root["min_visible_fraction"] = c.min_visible_fraction;
  root["min_pair_overlap"] = c.min_pair_overlap;
  root["overlap_bias"] = c.overlap_bias;
  root["depth_cue"] = c.depth_cue;
  root["min_stuff_area"] = c.min_stuff_area;
  root["placement_attempts"] = c.placement_attempts;
  root["max_restarts"] = c.max_restarts;
  return pretty(root);
}

SceneGenConfig config_from_json(const std::string& text,
                                const std::string& source) {
  const Json doc = parse(text, source);
  const Node root{doc, "", source};
  if (!doc.is_object()) root.fail("expected an object");
  SceneGenConfig c;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    const Node v{it.value(), key, source};
    if (key == "version") {
      check_version(root);
    } else if (key == "width") {
      c.width = v.int32();
    } else if (key == "height") {
      c.height = v.int32();
    } else if (key == "thing_classes") {
      c.thing_classes = v.int32();
    } else if (key == "stuff_classes") {
      c.stuff_classes = v.int32();
    } else if (key == "min_instances") {
      c.min_instances = v.int32();
    } else if (key == "max_instances") {
      c.max_instances = v.int32();
    } else if (key == "shape") {
      try {
        c.shape = parse_shape_family(v.string());
      } catch (const UsageError& e) {
        v.fail(e.what());
      }
    } else if (key == "min_extent") {
      c.min_extent = v.number();
    } else if (key == "max_extent") {
      c.max_extent = v.number();
    } else if (key == "confidence_model") {
      try {
        c.confidence_model = parse_confidence_model(v.string());
      } catch (const UsageError& e) {
        v.fail(e.what());
      }
    } else if (key == "confidence_noise") {
      c.confidence_noise = v.number();
    } else if (key == "min_confidence") {
      c.min_confidence = v.number();
    } else if (key == "max_confidence") {
      c.max_confidence = v.number();
    } else if (key == "perturbation") {
      v.only_keys({"morph_radius", "dropout", "spurious_rate", "label_noise"});
      if (v.has("morph_radius")) c.perturbation.morph_radius = v.at("morph_radius").int32();
      if (v.has("dropout")) c.perturbation.dropout = v.at("dropout").number();
      if (v.has("spurious_rate")) c.perturbation.spurious_rate = v.at("spurious_rate").number();
      if (v.has("label_noise")) c.perturbation.label_noise = v.at("label_noise").number();
    } else if (key == "min_visible_fraction") {
      c.min_visible_fraction = v.number();
    } else if (key == "min_pair_overlap") {
      c.min_pair_overlap = v.number();
    } else if (key == "overlap_bias") {
      c.overlap_bias = v.number();
    } else if (key == "depth_cue") {
      c.depth_cue = v.number();
    } else if (key == "min_stuff_area") {
      c.min_stuff_area = v.integer(0, INT64_MAX);
    } else if (key == "placement_attempts") {
      c.placement_attempts = v.int32();
    } else if (key == "max_restarts") {
      c.max_restarts = v.int32();
    } else {
      root.fail("unknown field '" + key + "'");
    }
  }
  c.validate();
  return c;
}

std::string manifest_to_json(const CorpusManifest& m) {
  Json root;
  root["version"] = kFormatVersion;
  root["config_hash"] = m.config_hash;
  root["seed"] = m.seed;
  Json scenes = Json::array();
  for (const auto& e : m.scenes) {
    scenes.push_back(Json{{"file", e.file},
                          {"image_id", e.image_id},
                          {"seed", e.seed},
                          {"content_hash", e.content_hash}});
  }
  root["scenes"] = std::move(scenes);
  return pretty(root);
}

CorpusManifest manifest_from_json(const std::string& text,
                                  const std::string& source) {
  const Json doc = parse(text, source);
  const Node root{doc, "", source};
  root.only_keys({"version", "config_hash", "seed", "scenes"});
  check_version(root);
  CorpusManifest m;
  m.config_hash = root.at("config_hash").string();
  m.seed = root.at("seed").uint64();
  const Node scenes = root.at("scenes");
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    const Node e = scenes.at(k);
    e.only_keys({"file", "image_id", "seed", "content_hash"});
    m.scenes.push_back({e.at("file").string(),
                        e.at("image_id").integer(INT64_MIN, INT64_MAX),
                        e.at("seed").uint64(), e.at("content_hash").string()});
  }
  return m;
}

// ---------------------------------------------------------------------------
// Panoptic PNG pair.

std::array<std::uint8_t, 3> encode_segment_id(std::int64_t id) {
  if (id < 0 || id >= (std::int64_t{1} << 24)) {
    throw DataError("segment id " + std::to_string(id) +
                    " cannot be encoded in 24 bits");
  }
  return {static_cast<std::uint8_t>(id & 0xff),
          static_cast<std::uint8_t>((id >> 8) & 0xff),
          static_cast<std::uint8_t>((id >> 16) & 0xff)};
}

std::int64_t decode_segment_id(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return static_cast<std::int64_t>(r) + 256 * static_cast<std::int64_t>(g) +
         65536 * static_cast<std::int64_t>(b);
}

namespace {

void write_rgb_png(const fs::path& path, const ImageGrid& grid,
                   const std::vector<std::uint8_t>& rgb) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(grid.width());
  image.height = static_cast<png_uint_32>(grid.height());
  image.format = PNG_FORMAT_RGB;
  const int ok = png_image_write_to_file(&image, path.string().c_str(), 0,
                                         rgb.data(), 0, nullptr);
  if (ok == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot write PNG " + path.string() + ": " + msg);
  }
}

// Checks that pixel ids and the table agree in both directions.
void check_table(const PanopticMap& map, const std::string& where) {
  std::map<SegmentId, std::int64_t> counts;
  for (const auto& s : map.segments) {
    if (s.segment_id < 1) {
      throw DataError(where + ": segment id " + std::to_string(s.segment_id) +
                      " must be positive");
    }
    if (!counts.emplace(s.segment_id, 0).second) {
      throw DataError(where + ": segment id " + std::to_string(s.segment_id) +
                      " listed twice");
    }
  }
  for (SegmentId id : map.pixel_segments) {
    if (id == 0) continue;
    auto it = counts.find(id);
    if (it == counts.end()) {
      throw DataError(where + ": pixel id " + std::to_string(id) +
                      " missing from the segment table");
    }
    ++it->second;
  }
  for (const auto& [id, n] : counts) {
    if (n == 0) {
      throw DataError(where + ": segment " + std::to_string(id) +
                      " has no pixels");
    }
  }
}

}  // namespace

void export_panoptic_png(const PanopticMap& map, const fs::path& png_path,
                         const fs::path& table_path) {
  if (map.pixel_segments.size() !=
      static_cast<std::size_t>(map.grid.pixel_count())) {
    throw DimensionError("panoptic pixel count does not match grid " +
                         map.grid.to_string());
  }
  check_table(map, png_path.string());
  std::vector<std::uint8_t> rgb(map.pixel_segments.size() * 3);
  for (std::size_t p = 0; p < map.pixel_segments.size(); ++p) {
    const auto c = encode_segment_id(map.pixel_segments[p]);
    std::copy(c.begin(), c.end(), rgb.begin() + static_cast<std::ptrdiff_t>(3 * p));
  }
  write_rgb_png(png_path, map.grid, rgb);

  Json table;
  table["version"] = kFormatVersion;
  table["width"] = map.grid.width();
  table["height"] = map.grid.height();
  table["segments_info"] = segment_table_json(map.segments);
  write_text_file(table_path, pretty(table));
}

PanopticMap import_panoptic_png(const fs::path& png_path,
                                const fs::path& table_path) {
  const std::string where = png_path.string();
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, where.c_str()) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("malformed PNG " + where + ": " + msg);
  }
  image.format = PNG_FORMAT_RGB;
  if (image.width < 1 || image.height < 1 ||
      static_cast<std::uint64_t>(image.width) * image.height >
          static_cast<std::uint64_t>(INT32_MAX)) {
    png_image_free(&image);
    throw DataError("PNG " + where + " has unsupported dimensions");
  }
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("malformed PNG " + where + ": " + msg);
  }
  const ImageGrid grid(static_cast<std::int32_t>(image.width),
                       static_cast<std::int32_t>(image.height));

  const std::string table_source = table_path.string();
  const Json doc = parse(read_text_file(table_path), table_source);
  const Node root{doc, "", table_source};
  root.only_keys({"version", "width", "height", "segments_info"});
  check_version(root);
  if (root.at("width").int32() != grid.width() ||
      root.at("height").int32() != grid.height()) {
    throw DimensionError(table_source + ": table size differs from PNG size " +
                         grid.to_string());
  }

  PanopticMap map(grid);
  const Node segs = root.at("segments_info");
  for (std::size_t k = 0; k < segs.size(); ++k) {
    map.segments.push_back(read_segment_info(segs.at(k), false));
  }
  for (std::size_t p = 0; p < map.pixel_segments.size(); ++p) {
    map.pixel_segments[p] = static_cast<SegmentId>(
        decode_segment_id(rgb[3 * p], rgb[3 * p + 1], rgb[3 * p + 2]));
  }
  check_table(map, where);
  return map;
}

namespace {

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  auto to8 = [m](double u) {
    return static_cast<std::uint8_t>(std::lround(255.0 * (u + m)));
  };
  return {to8(r), to8(g), to8(b)};
}

}  // namespace

void render_panoptic_png(const PanopticMap& map, const fs::path& png_path) {
  if (map.pixel_segments.size() !=
      static_cast<std::size_t>(map.grid.pixel_count())) {
    throw DimensionError("panoptic pixel count does not match grid " +
                         map.grid.to_string());
  }
  // Golden-angle hue steps keep neighbouring category ids apart; instances of
  // one thing category cycle through brightness levels.
  constexpr double kGolden = 0.6180339887498949;
  std::map<SegmentId, std::array<std::uint8_t, 3>> colours;
  std::map<ClassId, int> ordinal;
  for (const auto& s : map.segments) {
    const double hue = kGolden * static_cast<double>(s.category);
    double value = 0.9;
    double sat = s.is_thing ? 0.85 : 0.45;
    if (s.is_thing) {
      const int k = ordinal[s.category]++;
      value = 1.0 - 0.12 * static_cast<double>(k % 5);
    }
    colours[s.segment_id] = hsv_to_rgb(hue, sat, value);
  }
  std::vector<std::uint8_t> rgb(map.pixel_segments.size() * 3, 0);
  for (std::size_t p = 0; p < map.pixel_segments.size(); ++p) {
    const SegmentId id = map.pixel_segments[p];
    if (id == 0) continue;
    auto it = colours.find(id);
    if (it == colours.end()) {
      throw DataError("pixel id " + std::to_string(id) +
                      " missing from the segment table");
    }
    std::copy(it->second.begin(), it->second.end(),
              rgb.begin() + static_cast<std::ptrdiff_t>(3 * p));
  }
  write_rgb_png(png_path, map.grid, rgb);
}

// ---------------------------------------------------------------------------
// Occlusion matrices and models.

std::string occlusion_to_json(const OcclusionFile& file) {
  const std::size_t n = file.matrix.size();
  if (file.instance_ids.size() != n) {
    throw DataError("occlusion matrix of size " + std::to_string(n) + " has " +
                    std::to_string(file.instance_ids.size()) + " instance ids");
  }
  Json root;
  root["version"] = kFormatVersion;
  root["image_id"] = file.image_id;
  root["n"] = n;
  root["instance_ids"] = file.instance_ids;
  Json rows = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < n; ++j) row.push_back(file.matrix.at(i, j));
    rows.push_back(std::move(row));
  }
  root["entries"] = std::move(rows);
  return pretty(root);
}

OcclusionFile occlusion_from_json(const std::string& text,
                                  const std::string& source) {
  const Json doc = parse(text, source);
  const Node root{doc, "", source};
  root.only_keys({"version", "image_id", "n", "instance_ids", "entries"});
  check_version(root);
  OcclusionFile f;
  f.image_id = root.at("image_id").integer(INT64_MIN, INT64_MAX);
  const auto n = static_cast<std::size_t>(root.at("n").integer(0, 1 << 15));
  const Node ids = root.at("instance_ids");
  if (ids.size() != n) ids.fail("expected " + std::to_string(n) + " ids");
  for (std::size_t k = 0; k < n; ++k) f.instance_ids.push_back(ids.at(k).int32());
  const Node rows = root.at("entries");
  if (rows.size() != n) rows.fail("expected " + std::to_string(n) + " rows");
  std::vector<std::int8_t> entries;
  entries.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Node row = rows.at(i);
    if (row.size() != n) row.fail("expected " + std::to_string(n) + " entries");
    for (std::size_t j = 0; j < n; ++j) {
      entries.push_back(static_cast<std::int8_t>(row.at(j).integer(-1, 1)));
    }
  }
  try {
    f.matrix = OcclusionMatrix::from_entries(n, std::move(entries));
  } catch (const DataError& e) {
    rows.fail(e.what());
  }
  return f;
}

std::string model_to_json(const PairClassifierModel& model) {
  Json root;
  root["version"] = kFormatVersion;
  Json names = Json::array();
  for (auto n : pair_feature_names()) names.push_back(std::string(n));
  root["feature_names"] = std::move(names);
  root["weights"] = model.weights;
  root["bias"] = model.bias;
  const auto& t = model.training;
  root["training"] = Json{{"seed", t.seed},
                          {"epochs", t.epochs},
                          {"learning_rate", t.learning_rate},
                          {"n_pairs", t.n_pairs},
                          {"loss_curve", t.loss_curve}};
  return pretty(root);
}

PairClassifierModel model_from_json(const std::string& text,
                                    const std::string& source) {
  const Json doc = parse(text, source);
  const Node root{doc, "", source};
  root.only_keys({"version", "feature_names", "weights", "bias", "training"});
  check_version(root);
  const Node names = root.at("feature_names");
  if (names.size() != kNumPairFeatures) {
    names.fail("expected " + std::to_string(kNumPairFeatures) + " names");
  }
  for (std::size_t k = 0; k < kNumPairFeatures; ++k) {
    if (names.at(k).string() != pair_feature_names()[k]) {
      names.at(k).fail("expected feature '" +
                       std::string(pair_feature_names()[k]) + "'");
    }
  }
  PairClassifierModel model;
  const Node w = root.at("weights");
  if (w.size() != kNumPairFeatures) {
    w.fail("expected " + std::to_string(kNumPairFeatures) + " weights");
  }
  for (std::size_t k = 0; k < kNumPairFeatures; ++k) {
    model.weights[k] = w.at(k).number();
  }
  model.bias = root.at("bias").number();
  const Node t = root.at("training");
  t.only_keys({"seed", "epochs", "learning_rate", "n_pairs", "loss_curve"});
  model.training.seed = t.at("seed").uint64();
  model.training.epochs = static_cast<int>(t.at("epochs").integer(0, INT32_MAX));
  model.training.learning_rate = t.at("learning_rate").number();
  model.training.n_pairs =
      static_cast<std::size_t>(t.at("n_pairs").integer(0, INT64_MAX));
  const Node curve = t.at("loss_curve");
  for (std::size_t k = 0; k < curve.size(); ++k) {
    model.training.loss_curve.push_back(curve.at(k).number());
  }
  return model;
}

// ---------------------------------------------------------------------------
// Traces and results.

void TraceSummary::add(const FusionTrace& trace) {
  ++scenes;
  for (const auto& r : trace.records) {
    ++proposals;
    switch (r.outcome) {
      case ProposalOutcome::kKept: ++kept; break;
      case ProposalOutcome::kOverlapRejected: ++overlap_rejected; break;
      case ProposalOutcome::kBelowConfidence: ++below_confidence; break;
      case ProposalOutcome::kEmptied: ++emptied; break;
    }
    for (const auto& q : r.queries) {
      ++queries;
      if (q.answer) ++positive_answers;
      reclaimed_pixels += q.reclaimed;
    }
  }
}

std::string trace_to_json(const FusionTrace& trace, std::int64_t image_id,
                          const std::string& strategy) {
  Json root;
  root["version"] = kFormatVersion;
  root["image_id"] = image_id;
  root["strategy"] = strategy;
  Json records = Json::array();
  for (const auto& r : trace.records) {
    Json queries = Json::array();
    for (const auto& q : r.queries) {
      queries.push_back(Json{{"proposal_i", q.proposal_i},
                             {"proposal_j", q.proposal_j},
                             {"answer", q.answer},
                             {"intersection_area", q.intersection_area},
                             {"reclaimed", q.reclaimed}});
    }
    records.push_back(Json{{"proposal_id", r.proposal_id},
                           {"outcome", to_string(r.outcome)},
                           {"mask_area", r.mask_area},
                           {"unclaimed_area", r.unclaimed_area},
                           {"resolved_area", r.resolved_area},
                           {"final_area", r.final_area},
                           {"queries", std::move(queries)}});
  }
  root["records"] = std::move(records);
  return pretty(root);
}

TraceSummary trace_summary_from_json(const std::string& text,
                                     const std::string& source) {
  const Json doc = parse(text, source);
  const Node root{doc, "", source};
  root.only_keys({"version", "image_id", "strategy", "records"});
  check_version(root);
  FusionTrace trace;
  const Node records = root.at("records");
  for (std::size_t k = 0; k < records.size(); ++k) {
    const Node r = records.at(k);
    ProposalRecord rec;
    rec.proposal_id = r.at("proposal_id").int32();
    const std::string outcome = r.at("outcome").string();
    bool found = false;
    for (auto o : {ProposalOutcome::kKept, ProposalOutcome::kBelowConfidence,
                   ProposalOutcome::kOverlapRejected, ProposalOutcome::kEmptied}) {
      if (to_string(o) == outcome) {
        rec.outcome = o;
        found = true;
      }
    }
    if (!found) r.at("outcome").fail("unknown outcome '" + outcome + "'");
    const Node queries = r.at("queries");
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const Node e = queries.at(q);
      OcclusionQuery query;
      query.answer = e.at("answer").boolean();
      query.reclaimed = e.at("reclaimed").integer(0, INT64_MAX);
      rec.queries.push_back(query);
    }
    trace.records.push_back(std::move(rec));
  }
  TraceSummary s;
  s.add(trace);
  return s;
}

namespace {

Json triple_json(const QualityTriple& t) {
  return Json{{"pq", t.pq}, {"sq", t.sq}, {"rq", t.rq}, {"n", t.n}};
}

}  // namespace

std::string results_to_json(const PQStats& stats, const ClassCatalog& catalog,
                            std::size_t n_scenes,
                            const std::optional<TraceSummary>& traces) {
  if (n_scenes == 0) throw DataError("no scenes were evaluated");
  Json root;
  root["version"] = kFormatVersion;
  root["n_scenes"] = n_scenes;
  root["all"] = triple_json(stats.all);
  root["things"] = triple_json(stats.things);
  root["stuff"] = triple_json(stats.stuff);
  Json per_class = Json::array();
  for (const auto& [id, acc] : stats.per_class) {
    const ClassInfo* info = catalog.find(id);
    if (info == nullptr) {
      throw DataError("results reference class " + std::to_string(id) +
                      " missing from the catalog");
    }
    per_class.push_back(Json{{"class_id", id},
                             {"name", info->name},
                             {"is_thing", info->is_thing},
                             {"pq", acc.pq()},
                             {"sq", acc.sq()},
                             {"rq", acc.rq()},
                             {"tp", acc.tp},
                             {"fp", acc.fp},
                             {"fn", acc.fn},
                             {"iou_sum", acc.iou_sum}});
  }
  root["per_class"] = std::move(per_class);
  if (traces) {
    root["fusion"] = Json{{"scenes", traces->scenes},
                          {"proposals", traces->proposals},
                          {"kept", traces->kept},
                          {"overlap_rejected", traces->overlap_rejected},
                          {"below_confidence", traces->below_confidence},
                          {"emptied", traces->emptied},
                          {"queries", traces->queries},
                          {"positive_answers", traces->positive_answers},
                          {"reclaimed_pixels", traces->reclaimed_pixels}};
  }
  return pretty(root);
}

void write_results(const PQStats& stats, const ClassCatalog& catalog,
                   std::size_t n_scenes,
                   const std::optional<TraceSummary>& traces,
                   const fs::path& json_path, const fs::path& table_path) {
  const std::string json = results_to_json(stats, catalog, n_scenes, traces);
  std::string table = format_pq_table(stats);
  table += "\nscenes: " + std::to_string(n_scenes) + "\n";
  if (traces) {
    std::ostringstream os;
    os << "proposals: " << traces->proposals << " (kept " << traces->kept
       << ", overlap rejected " << traces->overlap_rejected
       << ", below floor " << traces->below_confidence << ", emptied "
       << traces->emptied << ")\n"
       << "occlusion queries: " << traces->queries << " ("
       << traces->positive_answers << " positive, " << traces->reclaimed_pixels
       << " pixels reclaimed)\n";
    table += os.str();
  }
  write_text_file(json_path, json);
  write_text_file(table_path, table);
}

}  // namespace ocfusion
