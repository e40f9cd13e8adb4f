#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Regenerates the checked-in fixture corpus under data/.

Everything is derived from a fixed seed, so re-running the script reproduces
the same files byte for byte.
"""

import json
import math
import pathlib
import re

import numpy as np

ROOT = pathlib.Path(__file__).resolve().parent.parent
DATA = ROOT / "data"
SEED = 20240917
CASE_DIM = 512
GUIDE_DIM = 4096

TAXONOMY = (
    "skin disease", [], [
        ("inflammatory", [], [
            ("eczematous", [], [
                ("eczema", ["eczematous dermatitis"], []),
                ("contact dermatitis", [], []),
                ("seborrheic dermatitis", [], []),
            ]),
            ("papulosquamous", [], [
                ("psoriasis", ["psoriasis vulgaris"], []),
                ("lichen planus", [], []),
                ("pityriasis rosea", [], []),
            ]),
            ("granulomatous", [], [
                ("granuloma annulare", ["GA"], []),
                ("sarcoidosis", [], []),
                ("necrobiosis lipoidica", [], []),
            ]),
            ("urticarial", [], [
                ("urticaria", ["hives"], []),
                ("angioedema", [], []),
            ]),
        ]),
        ("infectious", [], [
            ("fungal", [], [
                ("tinea corporis", ["ringworm"], []),
                ("tinea pedis", ["athlete's foot"], []),
                ("cutaneous candidiasis", [], []),
            ]),
            ("bacterial", [], [
                ("impetigo", [], []),
                ("cellulitis", [], []),
            ]),
            ("viral", [], [
                ("herpes zoster", ["shingles"], []),
                ("molluscum contagiosum", [], []),
                ("viral wart", ["verruca"], []),
            ]),
        ]),
        ("neoplastic", [], [
            ("malignant", [], [
                ("melanoma", ["malignant melanoma"], []),
                ("basal cell carcinoma", ["BCC"], []),
                ("squamous cell carcinoma", ["SCC"], []),
            ]),
            ("premalignant", [], [
                ("actinic keratosis", ["solar keratosis"], []),
            ]),
            ("benign", [], [
                ("melanocytic nevus", ["mole"], []),
                ("seborrheic keratosis", [], []),
                ("dermatofibroma", [], []),
            ]),
        ]),
        ("pigmentary", [], [
            ("hypopigmentation", [], [
                ("vitiligo", [], []),
            ]),
            ("hyperpigmentation", [], [
                ("melasma", [], []),
                ("post-inflammatory hyperpigmentation", ["PIH"], []),
            ]),
        ]),
        ("acneiform", [], [
            ("acne vulgaris", ["acne"], []),
            ("rosacea", [], []),
            ("perioral dermatitis", [], []),
        ]),
    ],
)

CONCEPTS = [
    "pigment network", "streaks", "dots and globules", "blue-whitish veil", "regression structures",
    "vascular structures", "erythema", "scale", "papule", "plaque", "annular configuration",
    "central clearing", "raised border", "vesicle", "crust", "ulceration", "hyperpigmentation",
    "hypopigmentation", "telangiectasia", "pustule",
]

STOPWORDS = """
# Generic interrogative and medical terms dropped from guideline queries.
a about also an and any are as at be been by can could describe diagnose diagnosis
differential disease diseases do does doctor for from has have how i identify image
in is it its kind like likely look looks me medical most my of on or patient patients
photo picture please shown show skin some symptom symptoms tell that the this to type
versus vs was were what when where which who why with you your clinical condition
conditions lesion lesions feature features present appear appears there
""".split()


def tokenize(text):
    return [t for t in re.split(r"[^a-z0-9\x80-￿]+", text.lower()) if t]


def fnv1a64(s):
    h = 0xcbf29ce484222325
    for b in s.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001b3) & 0xFFFFFFFFFFFFFFFF
    return h


def filter_query(q):
    stops = {w for w in STOPWORDS if not w.startswith("#")}
    kept = [t for t in tokenize(q) if t not in stops]
    return " ".join(kept) if kept else q.lower()


def hash_embed(text, dim):
    v = np.zeros(dim)
    for t in tokenize(text):
        v[fnv1a64(t) % dim] += 1.0
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def unit(v):
    return v / np.linalg.norm(v)


def at_cosine(rng, q, s):
    """Vector whose cosine with unit vector q is s."""
    u = rng.standard_normal(q.shape[0])
    u -= u.dot(q) * q
    u = unit(u)
    return s * q + math.sqrt(1.0 - s * s) * u


def rounded(v):
    return [round(float(x), 6) for x in v]


def taxonomy_json():
    def node(entry):
        name, aliases, children = entry
        out = {"id": name.replace(" ", "_").replace("'", ""), "name": name}
        if aliases:
            out["aliases"] = aliases
        if children:
            out["children"] = [node(c) for c in children]
        return out
    return {"nodes": [node(TAXONOMY)]}


def walk(entry, path=()):
    name, _, children = entry
    here = path + (name,)
    yield name, here, not children
    for c in children:
        yield from walk(c, here)


PATHS = {name: list(path) for name, path, _ in walk(TAXONOMY)}
LEAVES = [name for name, _, leaf in walk(TAXONOMY) if leaf]

DIAG_Q = "What disease is shown in this image?"
CONCEPT_Q = "Which dermoscopic concepts are present in this image?"
CAPTION_Q = "Describe this lesion in a clinical caption."

# image_ref, gold, classifier top-3, refined result (candidates -> preds), case neighbours, description
DIAGNOSIS = [
    ("dx-01-back", "melanoma", [("melanoma", 0.95), ("melanocytic nevus", 0.03), ("seborrheic keratosis", 0.02)],
     None, [("melanoma", 0.91), ("melanoma", 0.88), ("melanoma", 0.84), ("melanocytic nevus", 0.79)],
     "Asymmetric variegated pigmented macule with irregular borders on the upper back."),
    ("dx-02-elbow", "psoriasis", [("psoriasis", 0.93), ("eczema", 0.04), ("lichen planus", 0.03)],
     None, [("psoriasis", 0.90), ("psoriasis", 0.87), ("psoriasis", 0.85), ("eczema", 0.80)],
     "Well-demarcated erythematous plaque with silvery scale over the extensor elbow."),
    ("dx-03-trunk", "tinea corporis", [("tinea corporis", 0.72), ("granuloma annulare", 0.18), ("eczema", 0.10)],
     None, [("tinea corporis", 0.83), ("tinea corporis", 0.81), ("granuloma annulare", 0.78), ("tinea corporis", 0.76)],
     "Annular scaly plaque with an active border and central clearing on the trunk."),
    ("dx-04-wrist", "contact dermatitis", [("eczema", 0.97), ("contact dermatitis", 0.02), ("psoriasis", 0.01)],
     [("contact dermatitis", 0.91), ("eczema", 0.09)],
     [("contact dermatitis", 0.88), ("contact dermatitis", 0.85), ("contact dermatitis", 0.82), ("eczema", 0.80)],
     "Sharply bordered vesicular eczematous patch under a watch strap."),
    ("dx-05-nose", "basal cell carcinoma", [("basal cell carcinoma", 0.96), ("squamous cell carcinoma", 0.03),
                                            ("actinic keratosis", 0.01)],
     None, [("BCC", 0.92), ("basal cell carcinoma", 0.89), ("BCC", 0.86), ("squamous cell carcinoma", 0.80)],
     "Pearly papule with arborizing telangiectasia on the nasal ala."),
    ("dx-06-temple", "melanoma", [("seborrheic keratosis", 0.94), ("melanoma", 0.04), ("melanocytic nevus", 0.02)],
     None, [("seborrheic keratosis", 0.87), ("seborrheic keratosis", 0.84), ("melanoma", 0.82), ("seborrheic keratosis", 0.81)],
     "Dark stuck-on appearing plaque on the temple."),
    ("dx-07-hands", "vitiligo", [("vitiligo", 0.98), ("post-inflammatory hyperpigmentation", 0.01),
                                 ("melasma", 0.01)],
     None, [("vitiligo", 0.93), ("vitiligo", 0.91), ("vitiligo", 0.90), ("vitiligo", 0.86)],
     "Symmetric depigmented macules on the dorsal hands."),
    ("dx-08-thigh", "urticaria", [("urticaria", 0.91), ("angioedema", 0.06), ("cellulitis", 0.03)],
     None, [("hives", 0.85), ("urticaria", 0.84), ("urticaria", 0.83), ("angioedema", 0.80)],
     "Transient edematous wheals on the thigh."),
    ("dx-09-flank", "herpes zoster", [("herpes zoster", 0.95), ("impetigo", 0.03), ("contact dermatitis", 0.02)],
     None, [("shingles", 0.90), ("herpes zoster", 0.88), ("shingles", 0.85), ("impetigo", 0.79)],
     "Grouped vesicles on an erythematous base in a dermatomal band on the flank."),
    ("dx-10-cheek", "acne vulgaris", [("rosacea", 0.92), ("acne vulgaris", 0.05), ("perioral dermatitis", 0.03)],
     [("rosacea", 0.88), ("acne vulgaris", 0.12)],
     [("acne vulgaris", 0.89), ("acne vulgaris", 0.86), ("rosacea", 0.83), ("acne vulgaris", 0.81)],
     "Inflammatory papules and pustules on the cheek."),
]

CONCEPT_RECORDS = [
    ("cc-01", {"pigment network": 0.91, "streaks": 0.62, "blue-whitish veil": 0.58, "dots and globules": 0.44},
     ["pigment network", "streaks", "blue-whitish veil"]),
    ("cc-02", {"pigment network": 0.86, "dots and globules": 0.71}, ["pigment network", "dots and globules"]),
    ("cc-03", {"vascular structures": 0.83, "telangiectasia": 0.77, "ulceration": 0.52},
     ["vascular structures", "telangiectasia"]),
    ("cc-04", {"scale": 0.88, "plaque": 0.93, "erythema": 0.81}, ["scale", "plaque", "erythema"]),
    ("cc-05", {"annular configuration": 0.84, "central clearing": 0.79, "raised border": 0.74, "scale": 0.41},
     ["annular configuration", "central clearing", "raised border", "scale"]),
    ("cc-06", {"vesicle": 0.9, "crust": 0.66, "erythema": 0.7}, ["vesicle", "erythema"]),
    ("cc-07", {"regression structures": 0.61, "pigment network": 0.55, "blue-whitish veil": 0.49},
     ["regression structures", "blue-whitish veil"]),
    ("cc-08", {"hypopigmentation": 0.95}, ["hypopigmentation"]),
    ("cc-09", {"pustule": 0.82, "papule": 0.87, "erythema": 0.64}, ["pustule", "papule"]),
    ("cc-10", {"hyperpigmentation": 0.78, "pigment network": 0.3}, ["hyperpigmentation", "pigment network"]),
]

# image_ref, dermo text, classifier top-3, refined, neighbours, gold caption
CAPTIONS = [
    ("ga-dorsal-hand",
     "Erythematous, raised borders, dorsal hand; an annular plaque whose appearance suggests eczema.",
     [("eczema", 1.00), ("granuloma annulare", 0.0), ("tinea corporis", 0.0)],
     [("granuloma annulare", 1.00), ("eczema", 0.00)],
     [("granuloma annulare", 0.86), ("granuloma annulare", 0.81), ("granuloma annulare", 0.77),
      ("granuloma annulare", 0.74)],
     "Annular erythematous plaque with raised borders and central clearing on the dorsal hand, "
     "consistent with granuloma annulare."),
    ("cap-02-shin",
     "Well-demarcated erythematous plaques with thick silvery scale on the shin.",
     [("psoriasis", 0.94), ("eczema", 0.04), ("lichen planus", 0.02)], None,
     [("psoriasis", 0.88), ("psoriasis", 0.86), ("psoriasis", 0.83), ("lichen planus", 0.78)],
     "Well-demarcated erythematous plaques with silvery scale on the shin, typical of plaque psoriasis."),
    ("cap-03-back",
     "Asymmetric pigmented lesion with irregular borders and color variegation.",
     [("melanoma", 0.93), ("melanocytic nevus", 0.05), ("seborrheic keratosis", 0.02)], None,
     [("melanoma", 0.89), ("melanoma", 0.85), ("melanocytic nevus", 0.81), ("melanoma", 0.8)],
     "Asymmetric variegated pigmented lesion with irregular borders on the back, suspicious for melanoma."),
    ("cap-04-face",
     "Central facial erythema with papules and pustules and fine telangiectasia.",
     [("rosacea", 0.91), ("acne vulgaris", 0.06), ("perioral dermatitis", 0.03)], None,
     [("rosacea", 0.87), ("rosacea", 0.84), ("rosacea", 0.82), ("acne vulgaris", 0.8)],
     "Central facial erythema with papules, pustules and telangiectasia consistent with rosacea."),
    ("cap-05-arm",
     "Grouped vesicles on an erythematous base along a dermatome of the arm.",
     [("herpes zoster", 0.96), ("contact dermatitis", 0.03), ("impetigo", 0.01)], None,
     [("herpes zoster", 0.9), ("shingles", 0.88), ("herpes zoster", 0.85), ("impetigo", 0.78)],
     "Grouped vesicles on an erythematous base in a dermatomal distribution on the arm, herpes zoster."),
    ("cap-06-neck",
     "Skin-colored umbilicated papules clustered on the neck.",
     [("molluscum contagiosum", 0.84), ("viral wart", 0.1), ("melanocytic nevus", 0.06)], None,
     [("molluscum contagiosum", 0.86), ("molluscum contagiosum", 0.83), ("viral wart", 0.8),
      ("molluscum contagiosum", 0.78)],
     "Multiple small umbilicated skin-colored papules on the neck consistent with molluscum contagiosum."),
    ("cap-07-foot",
     "Scaly macerated interdigital skin between the toes.",
     [("tinea pedis", 0.92), ("contact dermatitis", 0.05), ("psoriasis", 0.03)], None,
     [("tinea pedis", 0.88), ("athlete's foot", 0.84), ("tinea pedis", 0.82), ("cutaneous candidiasis", 0.79)],
     "Macerated scaling in the interdigital spaces of the foot, typical of tinea pedis."),
    ("cap-08-cheek",
     "Symmetric brown patches over both cheeks.",
     [("melasma", 0.95), ("post-inflammatory hyperpigmentation", 0.04), ("vitiligo", 0.01)], None,
     [("melasma", 0.9), ("melasma", 0.87), ("PIH", 0.8), ("melasma", 0.79)],
     "Symmetric light brown patches on both cheeks consistent with melasma."),
    ("cap-09-leg",
     "Warm, spreading erythema with swelling on the lower leg.",
     [("cellulitis", 0.93), ("contact dermatitis", 0.04), ("urticaria", 0.03)], None,
     [("cellulitis", 0.87), ("cellulitis", 0.85), ("cellulitis", 0.81), ("contact dermatitis", 0.77)],
     "Poorly demarcated warm erythema and swelling of the lower leg consistent with cellulitis."),
    ("cap-10-scalp",
     "Greasy yellow scale on an erythematous scalp.",
     [("seborrheic dermatitis", 0.9), ("psoriasis", 0.07), ("tinea corporis", 0.03)], None,
     [("seborrheic dermatitis", 0.86), ("seborrheic dermatitis", 0.84), ("psoriasis", 0.82),
      ("seborrheic dermatitis", 0.8)],
     "Greasy yellow scale over erythematous scalp skin, typical of seborrheic dermatitis."),
]

CAPTION_CONCEPTS = {
    "ga-dorsal-hand": {"erythema": 0.82, "annular configuration": 0.88, "raised border": 0.79, "central clearing": 0.71},
    "cap-02-shin": {"plaque": 0.9, "scale": 0.92, "erythema": 0.8},
    "cap-03-back": {"pigment network": 0.81, "blue-whitish veil": 0.6, "streaks": 0.55},
    "cap-04-face": {"erythema": 0.85, "papule": 0.7, "pustule": 0.66, "telangiectasia": 0.62},
    "cap-05-arm": {"vesicle": 0.9, "erythema": 0.78},
    "cap-06-neck": {"papule": 0.88},
    "cap-07-foot": {"scale": 0.8},
    "cap-08-cheek": {"hyperpigmentation": 0.91},
    "cap-09-leg": {"erythema": 0.93},
    "cap-10-scalp": {"scale": 0.85, "erythema": 0.74},
}

GUIDELINES = [
    ("gl-ga-features", ["granuloma annulare"], "Granuloma annulare > Clinical features",
     "https://guidelines.example.org/granuloma-annulare#clinical-features",
     "Granuloma annulare presents as annular plaques with raised, skin-colored to erythematous borders and "
     "central clearing, most often on the dorsal hands and feet. Lesions are usually asymptomatic and lack "
     "surface scale, which distinguishes granuloma annulare from eczema and tinea corporis."),
    ("gl-ga-management", ["granuloma annulare"], "Granuloma annulare > Management",
     "https://guidelines.example.org/granuloma-annulare#management",
     "Localized granuloma annulare often resolves spontaneously within two years, so reassurance and "
     "observation are reasonable first steps. Potent topical or intralesional corticosteroids may hasten "
     "resolution of symptomatic plaques; phototherapy, dapsone or hydroxychloroquine are options for "
     "generalized disease that persists despite local therapy."),
    ("gl-eczema-features", ["eczema"], "Eczema > Clinical features",
     "https://guidelines.example.org/eczema#clinical-features",
     "Eczema causes itchy, poorly demarcated erythematous patches with scale, papules, vesicles and "
     "lichenification. Flexural involvement is typical in adults."),
    ("gl-eczema-differential", ["eczema", "tinea corporis", "psoriasis"], "Eczema > Differential diagnosis",
     "https://guidelines.example.org/eczema#differential",
     "The differential of eczema includes tinea corporis, psoriasis and contact dermatitis. Scraping for "
     "fungal elements helps when an annular scaly edge is present."),
    ("gl-contact-features", ["contact dermatitis"], "Contact dermatitis > Clinical features",
     "https://guidelines.example.org/contact-dermatitis#clinical-features",
     "Allergic contact dermatitis produces sharply bordered eczematous plaques reproducing the shape of the "
     "contact, such as a watch strap or jewellery; vesicles occur in acute reactions."),
    ("gl-psoriasis-features", ["psoriasis"], "Psoriasis > Clinical features",
     "https://guidelines.example.org/psoriasis#clinical-features",
     "Plaque psoriasis shows well-demarcated erythematous plaques with thick silvery scale on extensor "
     "surfaces such as elbows, knees and shins, and on the scalp."),
    ("gl-psoriasis-management", ["psoriasis"], "Psoriasis > Management",
     "https://guidelines.example.org/psoriasis#management",
     "Topical corticosteroids and vitamin D analogues are first-line for limited plaque psoriasis; "
     "phototherapy or systemic agents are used for extensive disease."),
    ("gl-melanoma-features", ["melanoma"], "Melanoma > Clinical features",
     "https://guidelines.example.org/melanoma#clinical-features",
     "Melanoma is suspected in pigmented lesions showing asymmetry, irregular borders, colour variegation, "
     "diameter above six millimetres or evolution. Dermoscopy may reveal an atypical pigment network, "
     "streaks, blue-whitish veil and regression structures."),
    ("gl-melanoma-management", ["melanoma"], "Melanoma > Management",
     "https://guidelines.example.org/melanoma#management",
     "Suspected melanoma requires excisional biopsy with narrow margins; wide local excision follows "
     "according to Breslow thickness."),
    ("gl-nevus-features", ["melanocytic nevus"], "Melanocytic nevus > Clinical features",
     "https://guidelines.example.org/melanocytic-nevus#clinical-features",
     "Common melanocytic nevi are symmetric, uniformly pigmented macules or papules with a regular pigment "
     "network on dermoscopy."),
    ("gl-bcc-features", ["basal cell carcinoma"], "Basal cell carcinoma > Clinical features",
     "https://guidelines.example.org/basal-cell-carcinoma#clinical-features",
     "Nodular basal cell carcinoma is a pearly papule with rolled borders and arborizing telangiectasia, "
     "typically on sun-exposed skin of the face; ulceration may develop."),
    ("gl-scc-features", ["squamous cell carcinoma"], "Squamous cell carcinoma > Clinical features",
     "https://guidelines.example.org/squamous-cell-carcinoma#clinical-features",
     "Cutaneous squamous cell carcinoma presents as a keratotic, tender nodule or plaque on sun-damaged "
     "skin and may ulcerate."),
    ("gl-ak-features", ["actinic keratosis"], "Actinic keratosis > Clinical features",
     "https://guidelines.example.org/actinic-keratosis#clinical-features",
     "Actinic keratoses are rough, scaly erythematous macules on chronically sun-exposed skin."),
    ("gl-sk-features", ["seborrheic keratosis"], "Seborrheic keratosis > Clinical features",
     "https://guidelines.example.org/seborrheic-keratosis#clinical-features",
     "Seborrheic keratoses are stuck-on appearing waxy brown plaques with milia-like cysts and comedo-like "
     "openings on dermoscopy."),
    ("gl-tinea-features", ["tinea corporis"], "Tinea corporis > Clinical features",
     "https://guidelines.example.org/tinea-corporis#clinical-features",
     "Tinea corporis forms annular plaques with an active scaly border and central clearing; potassium "
     "hydroxide microscopy confirms fungal hyphae."),
    ("gl-tinea-pedis", ["tinea pedis"], "Tinea pedis > Clinical features",
     "https://guidelines.example.org/tinea-pedis#clinical-features",
     "Interdigital tinea pedis causes macerated, fissured scaling between the toes, often with itch."),
    ("gl-candida", ["cutaneous candidiasis"], "Cutaneous candidiasis > Clinical features",
     "https://guidelines.example.org/candidiasis#clinical-features",
     "Cutaneous candidiasis affects moist skin folds with bright red patches and satellite pustules."),
    ("gl-impetigo", ["impetigo"], "Impetigo > Clinical features",
     "https://guidelines.example.org/impetigo#clinical-features",
     "Impetigo shows honey-coloured crusts over erosions, commonly around the nose and mouth in children."),
    ("gl-cellulitis", ["cellulitis"], "Cellulitis > Clinical features",
     "https://guidelines.example.org/cellulitis#clinical-features",
     "Cellulitis is a spreading, warm, tender erythema with swelling, usually unilateral on the lower leg, "
     "sometimes with fever."),
    ("gl-zoster", ["herpes zoster"], "Herpes zoster > Clinical features",
     "https://guidelines.example.org/herpes-zoster#clinical-features",
     "Herpes zoster produces grouped vesicles on an erythematous base confined to a single dermatome, "
     "preceded by pain."),
    ("gl-molluscum", ["molluscum contagiosum"], "Molluscum contagiosum > Clinical features",
     "https://guidelines.example.org/molluscum-contagiosum#clinical-features",
     "Molluscum contagiosum presents as small, firm, skin-coloured umbilicated papules, often clustered."),
    ("gl-wart", ["viral wart"], "Viral wart > Clinical features",
     "https://guidelines.example.org/viral-wart#clinical-features",
     "Common warts are hyperkeratotic papules with thrombosed capillaries visible as black dots."),
    ("gl-urticaria", ["urticaria"], "Urticaria > Clinical features",
     "https://guidelines.example.org/urticaria#clinical-features",
     "Urticaria consists of itchy, transient edematous wheals that resolve within twenty-four hours "
     "without residual marks."),
    ("gl-vitiligo", ["vitiligo"], "Vitiligo > Clinical features",
     "https://guidelines.example.org/vitiligo#clinical-features",
     "Vitiligo causes well-defined depigmented macules, often symmetric on the hands, face and around "
     "body orifices; Wood lamp accentuates the lesions."),
    ("gl-melasma", ["melasma"], "Melasma > Clinical features",
     "https://guidelines.example.org/melasma#clinical-features",
     "Melasma shows symmetric light to dark brown patches on the cheeks, forehead and upper lip, "
     "worsened by sun exposure and hormones."),
    ("gl-acne", ["acne vulgaris"], "Acne vulgaris > Clinical features",
     "https://guidelines.example.org/acne-vulgaris#clinical-features",
     "Acne vulgaris features comedones, inflammatory papules, pustules and nodules on the face, chest and "
     "back."),
    ("gl-rosacea", ["rosacea"], "Rosacea > Clinical features",
     "https://guidelines.example.org/rosacea#clinical-features",
     "Rosacea presents with persistent central facial erythema, telangiectasia, papules and pustules, "
     "without comedones, which separates rosacea from acne vulgaris."),
    ("gl-seb-derm", ["seborrheic dermatitis"], "Seborrheic dermatitis > Clinical features",
     "https://guidelines.example.org/seborrheic-dermatitis#clinical-features",
     "Seborrheic dermatitis causes greasy yellow scale on erythematous skin of the scalp, eyebrows and "
     "nasolabial folds."),
    ("gl-lichen-planus", ["lichen planus"], "Lichen planus > Clinical features",
     "https://guidelines.example.org/lichen-planus#clinical-features",
     "Lichen planus shows purple, polygonal, flat-topped papules with Wickham striae on the wrists."),
    ("gl-sarcoidosis", ["sarcoidosis"], "Sarcoidosis > Clinical features",
     "https://guidelines.example.org/sarcoidosis#clinical-features",
     "Cutaneous sarcoidosis forms red-brown papules and plaques with an apple-jelly colour on diascopy."),
]

GOLDEN_GUIDELINE_QUERY = "eczema vs granuloma annulare differential"


def dump_jsonl(path, records):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n")


def dump_json(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, ensure_ascii=False)
        f.write("\n")


def predictions(top):
    return {"predictions": [{"label": l, "score": s} for l, s in top]}


def main():
    rng = np.random.default_rng(SEED)
    fixtures = []
    image_embeddings = []
    cases = []

    def add_case_neighbours(image_ref, neighbours, description):
        q = unit(rng.standard_normal(CASE_DIM))
        image_embeddings.append({"image_ref": image_ref, "embedding": rounded(q)})
        for i, (label, sim) in enumerate(neighbours):
            cases.append({
                "id": f"case-{image_ref}-{i + 1}",
                "embedding": rounded(at_cosine(rng, q, sim)),
                "disease_label": label,
                "category_path": PATHS.get(ALIAS_TO_NAME.get(label, label)),
                "description": description,
            })

    def add_common(image_ref, question, dermo_text, top, refined, concepts):
        fixtures.append({"tool_id": "panderm", "image_ref": image_ref, "params": {"candidates": LEAVES},
                         "result": predictions(top)})
        if refined:
            pair = sorted(l for l, _ in refined)
            fixtures.append({"tool_id": "panderm", "image_ref": image_ref, "params": {"candidates": pair},
                             "result": predictions(refined)})
        fixtures.append({"tool_id": "dermo_gpt", "image_ref": image_ref, "params": {"question": question},
                         "result": {"text": dermo_text}})
        fixtures.append({"tool_id": "dermo_gpt", "image_ref": image_ref,
                         "params": {"question": "describe the lesion"}, "result": {"text": dermo_text}})
        fixtures.append({"tool_id": "qwen_vl", "image_ref": image_ref, "params": {"question": question},
                         "result": {"text": dermo_text}})
        scores = {c: concepts.get(c, 0.05) for c in CONCEPTS}
        fixtures.append({"tool_id": "make", "image_ref": image_ref, "params": {"features": CONCEPTS},
                         "result": {"scores": scores}})

    diag_manifest = []
    for ref, gold, top, refined, neigh, desc in DIAGNOSIS:
        add_common(ref, DIAG_Q, desc, top, refined, {})
        add_case_neighbours(ref, neigh, desc)
        diag_manifest.append({"image_ref": ref, "question": DIAG_Q, "gold": gold})

    concept_manifest = []
    for ref, scores, gold in CONCEPT_RECORDS:
        text = "Dermoscopy shows " + ", ".join(sorted(scores)) + "."
        add_common(ref, CONCEPT_Q, text, [("melanocytic nevus", 0.6), ("melanoma", 0.4)], None, scores)
        concept_manifest.append({"image_ref": ref, "question": CONCEPT_Q, "gold": gold})

    caption_manifest = []
    for ref, text, top, refined, neigh, gold in CAPTIONS:
        add_common(ref, CAPTION_Q, text, top, refined, CAPTION_CONCEPTS[ref])
        add_case_neighbours(ref, neigh, text)
        caption_manifest.append({"image_ref": ref, "question": CAPTION_Q, "gold": gold})

    # Background cases, unrelated to every fixture image.
    for i in range(80):
        leaf = LEAVES[i % len(LEAVES)]
        cases.append({
            "id": f"case-bg-{i + 1:03d}",
            "embedding": rounded(unit(rng.standard_normal(CASE_DIM))),
            "disease_label": leaf,
            "category_path": PATHS[leaf],
            "description": f"Archived case of {leaf}.",
        })

    chunks = []
    golden_query = hash_embed(filter_query(GOLDEN_GUIDELINE_QUERY), GUIDE_DIM)
    for cid, names, section, url, text in GUIDELINES:
        rec = {"id": cid, "text": text, "disease_names": names, "section": section, "source_url": url}
        if cid == "gl-ga-features":
            rec["embedding"] = rounded(at_cosine(rng, golden_query, 0.9))
        chunks.append(rec)

    dump_json(DATA / "corpus" / "taxonomy.json", taxonomy_json())
    dump_json(DATA / "corpus" / "concepts.json", {"concepts": CONCEPTS})
    with open(DATA / "corpus" / "stopwords.txt", "w", encoding="utf-8") as f:
        f.write("# Generic interrogative and medical terms dropped from guideline queries.\n")
        for w in sorted(set(w for w in STOPWORDS if not w.startswith("#") and w.isalnum() and w.islower())):
            f.write(w + "\n")
    dump_jsonl(DATA / "corpus" / "guidelines.jsonl", chunks)
    dump_jsonl(DATA / "corpus" / "cases.jsonl", cases)
    dump_jsonl(DATA / "fixtures" / "perception.jsonl", fixtures)
    dump_jsonl(DATA / "fixtures" / "image_embeddings.jsonl", image_embeddings)
    dump_jsonl(DATA / "manifests" / "diagnosis.jsonl", diag_manifest)
    dump_jsonl(DATA / "manifests" / "concept.jsonl", concept_manifest)
    dump_jsonl(DATA / "manifests" / "caption.jsonl", caption_manifest)


ALIAS_TO_NAME = {}


def _index_aliases(entry):
    name, aliases, children = entry
    for a in aliases:
        ALIAS_TO_NAME[a] = name
    for c in children:
        _index_aliases(c)


_index_aliases(TAXONOMY)

if __name__ == "__main__":
    main()
