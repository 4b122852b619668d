//! Class-to-task tables for the three ScanNet200 splits.

pub const SPLIT_A: [&[&str]; 3] = [
    &[
        "tv stand",
        "curtain",
        "blinds",
        "shower curtain",
        "bookshelf",
        "tv",
        "kitchen cabinet",
        "pillow",
        "lamp",
        "dresser",
        "monitor",
        "object",
        "ceiling",
        "board",
        "stove",
        "closet wall",
        "couch",
        "office chair",
        "kitchen counter",
        "shower",
        "closet",
        "doorframe",
        "sofa chair",
        "mailbox",
        "nightstand",
        "washing machine",
        "picture",
        "book",
        "sink",
        "recycling bin",
        "table",
        "backpack",
        "shower wall",
        "toilet",
        "copier",
        "counter",
        "stool",
        "refrigerator",
        "window",
        "file cabinet",
        "chair",
        "plant",
        "coffee table",
        "stairs",
        "armchair",
        "cabinet",
        "bathroom vanity",
        "bathroom stall",
        "mirror",
        "blackboard",
        "trash can",
        "stair rail",
        "box",
        "towel",
        "door",
        "clothes",
        "whiteboard",
        "bed",
        "bathtub",
        "desk",
        "wardrobe",
        "clothes dryer",
        "radiator",
        "shelf",
    ],
    &[
        "cushion",
        "end table",
        "dining table",
        "keyboard",
        "bag",
        "toilet paper",
        "printer",
        "blanket",
        "microwave",
        "shoe",
        "computer tower",
        "bottle",
        "bin",
        "ottoman",
        "bench",
        "basket",
        "fan",
        "laptop",
        "person",
        "paper towel dispenser",
        "oven",
        "rack",
        "piano",
        "suitcase",
        "rail",
        "container",
        "telephone",
        "stand",
        "light",
        "laundry basket",
        "pipe",
        "seat",
        "column",
        "bicycle",
        "ladder",
        "jacket",
        "storage bin",
        "coffee maker",
        "dishwasher",
        "machine",
        "mat",
        "windowsill",
        "bulletin board",
        "fireplace",
        "mini fridge",
        "water cooler",
        "shower door",
        "pillar",
        "ledge",
        "furniture",
        "cart",
        "decoration",
        "closet door",
        "vacuum cleaner",
        "dish rack",
        "range hood",
        "projector screen",
        "divider",
        "bathroom counter",
        "laundry hamper",
        "bathroom stall door",
        "ceiling light",
        "trash bin",
        "bathroom cabinet",
        "structure",
        "storage organizer",
        "potted plant",
        "mattress",
    ],
    &[
        "paper",
        "plate",
        "soap dispenser",
        "bucket",
        "clock",
        "guitar",
        "toilet paper holder",
        "speaker",
        "cup",
        "paper towel roll",
        "bar",
        "toaster",
        "ironing board",
        "soap dish",
        "toilet paper dispenser",
        "fire extinguisher",
        "ball",
        "hat",
        "shower curtain rod",
        "paper cutter",
        "tray",
        "toaster oven",
        "mouse",
        "toilet seat cover dispenser",
        "storage container",
        "scale",
        "tissue box",
        "light switch",
        "crate",
        "power outlet",
        "sign",
        "projector",
        "candle",
        "plunger",
        "stuffed animal",
        "headphones",
        "broom",
        "guitar case",
        "dustpan",
        "hair dryer",
        "water bottle",
        "handicap bar",
        "purse",
        "vent",
        "shower floor",
        "water pitcher",
        "bowl",
        "paper bag",
        "alarm clock",
        "music stand",
        "laundry detergent",
        "dumbbell",
        "tube",
        "cd case",
        "closet rod",
        "coffee kettle",
        "shower head",
        "keyboard piano",
        "case of water bottles",
        "coat rack",
        "folded chair",
        "fire alarm",
        "power strip",
        "calendar",
        "poster",
        "luggage",
    ],
];

pub const SPLIT_B: [&[&str]; 3] = [
    &[
        "alarm clock",
        "backpack",
        "bag",
        "bed",
        "blanket",
        "case of water bottles",
        "ceiling",
        "closet",
        "closet door",
        "closet wall",
        "clothes",
        "coat rack",
        "container",
        "curtain",
        "door",
        "dresser",
        "dumbbell",
        "fan",
        "guitar case",
        "hat",
        "ironing board",
        "lamp",
        "laptop",
        "laundry basket",
        "laundry hamper",
        "luggage",
        "mattress",
        "mini fridge",
        "nightstand",
        "object",
        "pillow",
        "poster",
        "power outlet",
        "purse",
        "rack",
        "recycling bin",
        "shelf",
        "shoe",
        "sign",
        "storage bin",
        "storage organizer",
        "suitcase",
        "tissue box",
        "wardrobe",
        "decoration",
        "armchair",
        "bench",
        "bicycle",
        "candle",
        "chair",
        "coffee table",
        "couch",
        "dining table",
        "end table",
        "fireplace",
        "jacket",
        "keyboard piano",
        "light",
        "music stand",
        "ottoman",
        "piano",
        "picture",
        "pillar",
        "plant",
        "potted plant",
        "rail",
        "sofa chair",
        "speaker",
        "stool",
        "table",
        "tv",
        "tv stand",
        "vacuum cleaner",
    ],
    &[
        "guitar",
        "paper towel roll",
        "book",
        "bookshelf",
        "cart",
        "furniture",
        "blackboard",
        "projector",
        "seat",
        "folded chair",
        "office chair",
        "projector screen",
        "whiteboard",
        "bin",
        "bucket",
        "bulletin board",
        "copier",
        "machine",
        "mailbox",
        "paper cutter",
        "printer",
        "column",
        "storage container",
        "blinds",
        "structure",
        "water bottle",
        "ball",
        "board",
        "box",
        "cabinet",
        "cd case",
        "ceiling light",
        "clock",
        "computer tower",
        "cup",
        "desk",
        "divider",
        "file cabinet",
        "headphones",
        "keyboard",
        "monitor",
        "mouse",
        "paper",
        "person",
        "power strip",
        "radiator",
        "stand",
        "telephone",
        "tray",
        "tube",
        "window",
        "windowsill",
        "pipe",
        "stair rail",
        "stairs",
    ],
    &[
        "bar",
        "basket",
        "bathroom cabinet",
        "bathroom counter",
        "bathroom stall",
        "bathroom stall door",
        "bathroom vanity",
        "bathtub",
        "bottle",
        "broom",
        "clothes dryer",
        "cushion",
        "doorframe",
        "fire alarm",
        "hair dryer",
        "handicap bar",
        "ledge",
        "light switch",
        "mat",
        "mirror",
        "paper towel dispenser",
        "plunger",
        "scale",
        "shower",
        "shower curtain",
        "shower curtain rod",
        "shower door",
        "shower floor",
        "shower head",
        "shower wall",
        "sink",
        "soap dish",
        "soap dispenser",
        "toilet",
        "toilet paper",
        "toilet paper dispenser",
        "toilet paper holder",
        "toilet seat cover dispenser",
        "towel",
        "trash bin",
        "washing machine",
        "closet rod",
        "dustpan",
        "laundry detergent",
        "stuffed animal",
        "bowl",
        "calendar",
        "coffee kettle",
        "coffee maker",
        "counter",
        "dish rack",
        "dishwasher",
        "fire extinguisher",
        "kitchen cabinet",
        "kitchen counter",
        "microwave",
        "oven",
        "paper bag",
        "plate",
        "range hood",
        "refrigerator",
        "stove",
        "toaster",
        "toaster oven",
        "trash can",
        "vent",
        "water cooler",
        "water pitcher",
        "crate",
        "ladder",
    ],
];

pub const SPLIT_C: [&[&str]; 3] = [
    &[
        "basket",
        "trash can",
        "stair rail",
        "toaster oven",
        "laundry hamper",
        "bulletin board",
        "dining table",
        "stuffed animal",
        "bathroom vanity",
        "box",
        "ceiling",
        "potted plant",
        "luggage",
        "closet wall",
        "paper cutter",
        "desk",
        "object",
        "rail",
        "tissue box",
        "plate",
        "keyboard",
        "hat",
        "copier",
        "shower head",
        "bed",
        "paper towel dispenser",
        "fire extinguisher",
        "paper towel roll",
        "backpack",
        "water bottle",
        "bathroom cabinet",
        "stove",
        "laundry basket",
        "alarm clock",
        "headphones",
        "piano",
        "guitar",
        "bag",
        "door",
        "speaker",
        "water cooler",
        "shoe",
        "water pitcher",
        "dumbbell",
        "furniture",
        "decoration",
        "radiator",
        "plunger",
        "shower",
        "bar",
        "hair dryer",
        "suitcase",
        "cabinet",
        "chair",
        "board",
        "laundry detergent",
        "whiteboard",
        "vacuum cleaner",
        "power outlet",
        "storage bin",
        "computer tower",
        "mailbox",
        "shelf",
        "ledge",
        "pillar",
        "toilet paper",
    ],
    &[
        "ironing board",
        "divider",
        "oven",
        "dish rack",
        "shower door",
        "mini fridge",
        "bicycle",
        "laptop",
        "armchair",
        "couch",
        "coffee kettle",
        "counter",
        "structure",
        "pipe",
        "bowl",
        "shower curtain rod",
        "sofa chair",
        "clothes dryer",
        "coffee table",
        "stairs",
        "toilet seat cover dispenser",
        "machine",
        "paper bag",
        "book",
        "blinds",
        "monitor",
        "shower wall",
        "curtain",
        "closet",
        "telephone",
        "fan",
        "ball",
        "bucket",
        "sign",
        "mirror",
        "clock",
        "nightstand",
        "tv stand",
        "handicap bar",
        "poster",
        "blanket",
        "cup",
        "recycling bin",
        "lamp",
        "scale",
        "mouse",
        "wardrobe",
        "ottoman",
        "paper",
        "power strip",
        "fireplace",
        "doorframe",
        "toilet",
        "trash bin",
        "case of water bottles",
        "light",
        "washing machine",
        "guitar case",
        "sink",
        "bathtub",
        "ladder",
        "bookshelf",
        "column",
        "clothes",
        "keyboard piano",
        "music stand",
    ],
    &[
        "mattress",
        "toaster",
        "stool",
        "plant",
        "folded chair",
        "microwave",
        "cushion",
        "bench",
        "soap dispenser",
        "storage organizer",
        "shower curtain",
        "cart",
        "kitchen counter",
        "towel",
        "blackboard",
        "tv",
        "printer",
        "stand",
        "rack",
        "bathroom counter",
        "closet rod",
        "bottle",
        "range hood",
        "purse",
        "candle",
        "person",
        "coffee maker",
        "light switch",
        "storage container",
        "bathroom stall door",
        "shower floor",
        "kitchen cabinet",
        "refrigerator",
        "fire alarm",
        "tube",
        "toilet paper holder",
        "ceiling light",
        "picture",
        "end table",
        "closet door",
        "file cabinet",
        "crate",
        "toilet paper dispenser",
        "pillow",
        "mat",
        "bathroom stall",
        "broom",
        "container",
        "seat",
        "jacket",
        "dresser",
        "dustpan",
        "table",
        "projector",
        "window",
        "windowsill",
        "tray",
        "cd case",
        "soap dish",
        "office chair",
        "dishwasher",
        "vent",
        "coat rack",
        "calendar",
        "bin",
        "projector screen",
    ],
];
