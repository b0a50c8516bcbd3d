#pragma once

#include <string_view>

namespace pathforge {

// Bundled face anti-spoofing taxonomy: root -> modality (RGB, DEPTH, IR) ->
// liveness / attack family -> attack type. Byte-identical to
// data/fas_tree.json.
inline constexpr std::string_view kFasTreeJson = R"json({
  "nodes": [
    {
      "children": [
        "depth.real",
        "depth.2d",
        "depth.3d"
      ],
      "clause_negative": "The depth evidence is inconclusive, so step back to the other modalities.",
      "clause_positive": "Examine the depth map for facial geometry.",
      "id": "depth",
      "name": "DEPTH"
    },
    {
      "children": [
        "depth.2d.print",
        "depth.2d.replay"
      ],
      "clause_negative": "The depth planarity cue is weak, so reconsider the attack family.",
      "clause_positive": "The depth map is nearly planar, suggesting a 2D presentation.",
      "id": "depth.2d",
      "name": "2D attack"
    },
    {
      "children": [],
      "clause_negative": "No bent sheet is confirmed in the depth map.",
      "clause_positive": "The depth map shows a bent sheet without facial relief.",
      "id": "depth.2d.print",
      "name": "print attack"
    },
    {
      "children": [],
      "clause_negative": "No flat screen is confirmed in the depth map.",
      "clause_positive": "The depth map shows a perfectly flat rectangular screen.",
      "id": "depth.2d.replay",
      "name": "replay attack"
    },
    {
      "children": [
        "depth.3d.mask"
      ],
      "clause_negative": "The depth rigidity cue is weak, so reconsider the attack family.",
      "clause_positive": "The depth map shows relief with unnatural rigidity.",
      "id": "depth.3d",
      "name": "3D attack"
    },
    {
      "children": [],
      "clause_negative": "No mask shell is confirmed in the depth map.",
      "clause_positive": "The depth map shows a shell with a gap behind the mask.",
      "id": "depth.3d.mask",
      "name": "mask attack"
    },
    {
      "children": [],
      "clause_negative": "The depth relief alone does not confirm a live face.",
      "clause_positive": "The depth map shows smooth natural facial relief.",
      "id": "depth.real",
      "name": "real"
    },
    {
      "children": [
        "ir.real",
        "ir.2d",
        "ir.3d"
      ],
      "clause_negative": "The infrared evidence is inconclusive, so step back to the other modalities.",
      "clause_positive": "Examine the infrared image for material reflectance.",
      "id": "ir",
      "name": "IR"
    },
    {
      "children": [
        "ir.2d.print",
        "ir.2d.replay"
      ],
      "clause_negative": "The infrared uniformity cue is weak, so reconsider the attack family.",
      "clause_positive": "The infrared image shows uniform reflectance of a flat medium.",
      "id": "ir.2d",
      "name": "2D attack"
    },
    {
      "children": [],
      "clause_negative": "No paper reflectance is confirmed in the infrared image.",
      "clause_positive": "The infrared image shows dull paper reflectance.",
      "id": "ir.2d.print",
      "name": "print attack"
    },
    {
      "children": [],
      "clause_negative": "No emissive screen is confirmed in the infrared image.",
      "clause_positive": "The infrared image shows a dark emissive screen.",
      "id": "ir.2d.replay",
      "name": "replay attack"
    },
    {
      "children": [
        "ir.3d.mask"
      ],
      "clause_negative": "The infrared material cue is weak, so reconsider the attack family.",
      "clause_positive": "The infrared image shows synthetic material reflectance.",
      "id": "ir.3d",
      "name": "3D attack"
    },
    {
      "children": [],
      "clause_negative": "No mask material is confirmed in the infrared image.",
      "clause_positive": "The infrared image shows silicone or resin reflectance of a mask.",
      "id": "ir.3d.mask",
      "name": "mask attack"
    },
    {
      "children": [],
      "clause_negative": "The infrared reflectance alone does not confirm a live face.",
      "clause_positive": "The infrared image shows skin-like reflectance with visible vessels.",
      "id": "ir.real",
      "name": "real"
    },
    {
      "children": [
        "rgb.real",
        "rgb.2d",
        "rgb.3d"
      ],
      "clause_negative": "The RGB evidence is inconclusive, so step back to the other modalities.",
      "clause_positive": "Examine the RGB image for color and texture evidence.",
      "id": "rgb",
      "name": "RGB"
    },
    {
      "children": [
        "rgb.2d.print",
        "rgb.2d.replay"
      ],
      "clause_negative": "The RGB flatness cue is weak, so reconsider the attack family.",
      "clause_positive": "The RGB face looks flat, suggesting a planar 2D presentation.",
      "id": "rgb.2d",
      "name": "2D attack"
    },
    {
      "children": [],
      "clause_negative": "No paper texture is confirmed in the RGB image.",
      "clause_positive": "The RGB face shows paper texture and halftone dots.",
      "id": "rgb.2d.print",
      "name": "print attack"
    },
    {
      "children": [],
      "clause_negative": "No screen moire is confirmed in the RGB image.",
      "clause_positive": "The RGB face shows moire patterns and screen glare.",
      "id": "rgb.2d.replay",
      "name": "replay attack"
    },
    {
      "children": [
        "rgb.3d.mask"
      ],
      "clause_negative": "The RGB shading cue is weak, so reconsider the attack family.",
      "clause_positive": "The RGB face shows rigid surface shading, suggesting a 3D artifact.",
      "id": "rgb.3d",
      "name": "3D attack"
    },
    {
      "children": [],
      "clause_negative": "No mask edges are confirmed in the RGB image.",
      "clause_positive": "The RGB face shows mask edges around the eyes and mouth.",
      "id": "rgb.3d.mask",
      "name": "mask attack"
    },
    {
      "children": [],
      "clause_negative": "The RGB skin texture alone does not confirm a live face.",
      "clause_positive": "The RGB face shows natural skin texture and consistent lighting.",
      "id": "rgb.real",
      "name": "real"
    },
    {
      "children": [
        "rgb",
        "depth",
        "ir"
      ],
      "clause_negative": "Return to the overall liveness assessment.",
      "clause_positive": "Assess whether the face is live across the RGB, depth and infrared modalities.",
      "id": "root",
      "name": "face"
    }
  ],
  "root": "root"
}
)json";

} // namespace pathforge
