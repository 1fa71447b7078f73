//! Transformation functions from scene annotations to the five question
//! categories, with option-set cardinalities calibrated so that a uniform
//! random guesser scores {1/3, 1/4, 1/7, 1/2, 1/2} per category.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::DataSplit;
use crate::scene::{catalog, object_name, Scene};
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    CountObjects,
    CountAboveBelow,
    IdentifyAboveBelow,
    ObjectStable,
    TowerStable,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::CountObjects,
        Category::CountAboveBelow,
        Category::IdentifyAboveBelow,
        Category::ObjectStable,
        Category::TowerStable,
    ];

    /// Option-set size; fixes the uniform-guess baseline per category.
    pub fn cardinality(&self) -> usize {
        match self {
            Category::CountObjects => 3,
            Category::CountAboveBelow => 4,
            Category::IdentifyAboveBelow => 7,
            Category::ObjectStable | Category::TowerStable => 2,
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Category::ObjectStable | Category::TowerStable)
    }

    pub fn is_stability(&self) -> bool {
        self.is_binary()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::CountObjects => "count_objects",
            Category::CountAboveBelow => "count_above_below",
            Category::IdentifyAboveBelow => "identify_above_below",
            Category::ObjectStable => "object_stable",
            Category::TowerStable => "tower_stable",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub qa_id: String,
    pub scene_id: String,
    pub category: Category,
    pub question: String,
    pub options: Vec<String>,
    /// Singleton for every generated category; kept as a set for human
    /// sim2real items which may admit several phrasings.
    pub answer: Vec<String>,
    pub is_binary: bool,
    pub split: DataSplit,
}

impl QAItem {
    pub fn validate(&self) -> Result<()> {
        if self.options.is_empty() {
            return Err(Error::validation("options", "option set must be non-empty"));
        }
        for a in &self.answer {
            if !self.options.contains(a) {
                return Err(Error::validation("answer", format!("answer '{a}' not among options")));
            }
        }
        let mut unique = self.options.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != self.options.len() {
            return Err(Error::validation("options", "options must be unique"));
        }
        if self.is_binary && self.options != ["True", "False"] {
            return Err(Error::validation("options", "binary items must offer exactly True, False"));
        }
        Ok(())
    }
}

/// Question text with the option list appended in fixed order.
pub fn stringify_question(item: &QAItem) -> String {
    format!("{} Choose from: {}", item.question, item.options.join(", "))
}

/// Draw the option set for a category: the truth plus unique distractors,
/// deterministically shuffled.
pub fn option_set(
    category: Category,
    truth: &str,
    scene: &Scene,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<String>> {
    let k = category.cardinality();
    let pool: Vec<String> = match category {
        Category::CountObjects => (2..=6).map(|v| v.to_string()).collect(),
        Category::CountAboveBelow => (0..=5).map(|v| v.to_string()).collect(),
        Category::IdentifyAboveBelow => {
            catalog().into_iter().map(|(s, c)| object_name(c, s)).collect()
        }
        Category::ObjectStable | Category::TowerStable => {
            return Ok(vec!["True".to_string(), "False".to_string()]);
        }
    };
    let mut distractors: Vec<String> = pool.into_iter().filter(|v| v != truth).collect();
    if distractors.len() + 1 < k {
        return Err(Error::Generation(format!(
            "catalog too small for {k} unique options in category {category}"
        )));
    }
    distractors.shuffle(rng);
    distractors.truncate(k - 1);
    let mut options = distractors;
    options.push(truth.to_string());
    options.shuffle(rng);
    let _ = scene; // distractor pools are currently scene-independent
    Ok(options)
}

/// Generate every QA for one scene. Requires a filled stability report.
/// Emission order: count_objects, then per reference object bottom to top
/// (count above, count below, identify above, identify below), then one
/// object_stable per object, then tower_stable.
pub fn generate_qas(scene: &Scene, rng_seed: u64) -> Result<Vec<QAItem>> {
    if scene.stability.per_object.len() != scene.objects.len() {
        return Err(Error::validation(
            "stability",
            "scene has no stability report; label it before generating QAs",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, &scene.scene_id));
    let n = scene.objects.len();
    let split = crate::manifest::split_for(&scene.scene_id, 0.75);
    let mut items = Vec::new();
    let mut next_id = {
        let scene_id = scene.scene_id.clone();
        let mut counter = 0usize;
        move || {
            let id = format!("{scene_id}_q{counter:03}");
            counter += 1;
            id
        }
    };
    let push = |items: &mut Vec<QAItem>,
                    qa_id: String,
                    category: Category,
                    question: String,
                    truth: String,
                    rng: &mut ChaCha8Rng|
     -> Result<()> {
        let options = option_set(category, &truth, scene, rng)?;
        let item = QAItem {
            qa_id,
            scene_id: scene.scene_id.clone(),
            category,
            question,
            options,
            answer: vec![truth],
            is_binary: category.is_binary(),
            split,
        };
        item.validate()?;
        items.push(item);
        Ok(())
    };

    // Referent names are usable only when unique within the scene.
    let mut name_counts: BTreeMap<String, usize> = BTreeMap::new();
    for obj in &scene.objects {
        *name_counts.entry(obj.name()).or_insert(0) += 1;
    }
    let unambiguous = |name: &str| name_counts.get(name).copied() == Some(1);

    push(
        &mut items,
        next_id(),
        Category::CountObjects,
        "How many objects are in the scene?".to_string(),
        n.to_string(),
        &mut rng,
    )?;

    for (i, obj) in scene.objects.iter().enumerate() {
        let name = obj.name();
        if !unambiguous(&name) {
            continue;
        }
        push(
            &mut items,
            next_id(),
            Category::CountAboveBelow,
            format!("How many objects are above the {name}?"),
            (n - 1 - i).to_string(),
            &mut rng,
        )?;
        push(
            &mut items,
            next_id(),
            Category::CountAboveBelow,
            format!("How many objects are below the {name}?"),
            i.to_string(),
            &mut rng,
        )?;
        if i + 1 < n {
            push(
                &mut items,
                next_id(),
                Category::IdentifyAboveBelow,
                format!("What is the shape/color of the object above the {name}?"),
                scene.objects[i + 1].name(),
                &mut rng,
            )?;
        }
        if i > 0 {
            push(
                &mut items,
                next_id(),
                Category::IdentifyAboveBelow,
                format!("What is the shape/color of the object below the {name}?"),
                scene.objects[i - 1].name(),
                &mut rng,
            )?;
        }
    }

    for (i, obj) in scene.objects.iter().enumerate() {
        let name = obj.name();
        if !unambiguous(&name) {
            continue;
        }
        let truth = if scene.stability.per_object[i].stable { "True" } else { "False" };
        push(
            &mut items,
            next_id(),
            Category::ObjectStable,
            format!("Will the {name} stay stationary?"),
            truth.to_string(),
            &mut rng,
        )?;
    }

    let tower_truth = if scene.stability.tower_stable { "True" } else { "False" };
    push(
        &mut items,
        next_id(),
        Category::TowerStable,
        "Will this collection of objects stay stationary?".to_string(),
        tower_truth.to_string(),
        &mut rng,
    )?;

    Ok(items)
}

/// Category counts over a corpus, for distribution reporting.
pub fn category_histogram(items: &[QAItem]) -> BTreeMap<Category, usize> {
    let mut hist = BTreeMap::new();
    for item in items {
        *hist.entry(item.category).or_insert(0) += 1;
    }
    hist
}

#[cfg(test)]
pub mod test_oracle {
    //! Inverse of [`stringify_question`], used as a round-trip oracle.

    pub fn parse_options(text: &str) -> Option<(String, Vec<String>)> {
        let (question, opts) = text.rsplit_once(" Choose from: ")?;
        let options = opts.split(", ").map(|s| s.to_string()).collect();
        Some((question.to_string(), options))
    }
}
