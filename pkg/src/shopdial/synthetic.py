"""Seeded synthetic product catalogs for tests, demos and acceptance runs."""
from __future__ import annotations

import math
import random

from .catalog import Catalog, catalog_from_records

# Values of different aspects in one category share no tokens, so keyword matching stays unambiguous.
CATEGORIES: dict[str, dict[str, list[str]]] = {
    "tablet case": {
        "brand": ["otterbox", "spigen", "moko", "procase", "fintie", "zugu", "esr", "jetech"],
        "color": ["black", "blue", "pink", "purple", "gray", "teal", "navy"],
        "material": ["leather", "silicone", "tpu", "polycarbonate", "fabric"],
        "compatible model": ["ipad air", "galaxy tab", "kindle fire", "surface go", "ipad mini"],
        "closure": ["magnetic", "zipper", "snap", "velcro"],
        "style": ["folio", "rugged", "slim", "keyboard"],
    },
    "lipstick": {
        "brand": ["revlon", "maybelline", "nyx", "loreal", "gocheaper", "milani", "covergirl"],
        "color": ["dynamite red", "nude", "coral", "plum", "berry", "mauve", "fuchsia"],
        "finish type": ["matte", "glossy", "satin", "metallic", "sheer"],
        "skin type": ["normal", "dry", "oily", "sensitive"],
        "special feature": ["long lasting", "waterproof", "vegan", "moisturizing"],
        "item form": ["stick", "liquid", "cream", "crayon"],
    },
    "laptop": {
        "brand": ["lenovo", "dell", "hp", "asus", "acer", "apple", "msi"],
        "screen size": ["13 inch", "14 inch", "15.6 inch", "17 inch"],
        "ram": ["8gb", "16gb", "32gb", "64gb"],
        "hard disk size": ["256gb", "512gb", "1tb", "2tb"],
        "operating system": ["windows", "chromeos", "macos", "linux"],
        "processor": ["intel", "ryzen", "m2", "celeron", "snapdragon"],
    },
    "headphones": {
        "brand": ["sony", "bose", "jbl", "sennheiser", "skullcandy", "anker", "beats"],
        "color": ["black", "white", "silver", "green", "gold"],
        "connectivity": ["bluetooth", "wired", "usb"],
        "form factor": ["over ear", "on ear", "in ear", "earbuds"],
        "noise control": ["active cancellation", "passive isolation", "transparency"],
        "water resistance": ["ipx4", "ipx5", "ipx7", "ipx8"],
    },
    "coffee maker": {
        "brand": ["keurig", "cuisinart", "breville", "hamilton", "bonavita", "ninja"],
        "capacity": ["single serve", "4 cups", "12 cups", "14 cups"],
        "color": ["black", "stainless", "red", "white"],
        "filter type": ["permanent", "paper", "pod"],
        "special feature": ["programmable", "thermal carafe", "auto shutoff", "grinder"],
    },
    "vacuum": {
        "brand": ["dyson", "shark", "bissell", "hoover", "eureka", "roborock"],
        "form factor": ["upright", "stick", "robotic", "canister", "handheld"],
        "power source": ["corded", "cordless"],
        "filter type": ["hepa", "foam", "cloth"],
        "color": ["purple", "gray", "blue", "red", "black"],
        "surface recommendation": ["carpet", "hardwood", "tile", "multi surface"],
    },
    "shampoo": {
        "brand": ["pantene", "dove", "tresemme", "garnier", "aveeno", "suave"],
        "hair type": ["curly", "straight", "wavy", "thin", "thick"],
        "scent": ["lavender", "coconut", "citrus", "unscented", "mint"],
        "item form": ["liquid", "bar", "powder"],
        "size": ["12 ounce", "16 ounce", "32 ounce"],
        "material feature": ["sulfate free", "organic", "vegan"],
    },
    "desk lamp": {
        "brand": ["taotronics", "lepower", "tomons", "ikea", "phive"],
        "color": ["white", "black", "silver", "walnut"],
        "light source type": ["led", "incandescent", "halogen"],
        "power source": ["usb", "plug", "battery"],
        "style": ["modern", "industrial", "vintage", "minimalist"],
        "special feature": ["dimmable", "touch control", "wireless charging", "clamp"],
    },
}

_BASE_PRICE = {"tablet case": 18, "lipstick": 9, "laptop": 650, "headphones": 90, "coffee maker": 70,
               "vacuum": 180, "shampoo": 8, "desk lamp": 30}


def _zipf_weights(n: int, s: float) -> list[float]:
    return [1.0 / (r + 1) ** s for r in range(n)]


def synthetic_records(n_products: int, seed: int = 0, categories=None, missing_rate: float = 0.1,
                      skew: float = 0.8) -> list[dict]:
    """Raw product records in the ingest format (numeric price and review, free aspects)."""
    rng = random.Random(seed)
    cats = list(categories or CATEGORIES)
    records = []
    for i in range(n_products):
        category = cats[i % len(cats)]
        spec = CATEGORIES[category]
        while True:
            aspects = {}
            for aspect, values in spec.items():
                if rng.random() < missing_rate:
                    continue
                aspects[aspect] = rng.choices(values, weights=_zipf_weights(len(values), skew))[0]
            if len(aspects) >= 2:
                break
        model = f"{rng.choice('ABCDEFGHJKLMNPQRSTUVWXYZ')}{rng.choice('ABCDEFGHJKLMNPQRSTUVWXYZ')}{rng.randint(100, 9999)}"
        title = " ".join(x for x in (aspects.get("brand", ""), category, model) if x)
        price = round(_BASE_PRICE.get(category, 25) * math.exp(rng.gauss(0, 0.6)), 2)
        review = round(min(5.0, max(1.0, rng.gauss(4.1, 0.5))), 1)
        records.append({"id": f"P{i:05d}", "category": category, "title": title,
                        "price": price, "review": review, "aspects": aspects})
    return records


def synthetic_catalog(n_products: int = 1000, seed: int = 0, domain: str = "synthetic", **kwargs) -> Catalog:
    return catalog_from_records(synthetic_records(n_products, seed, **kwargs), domain)
