use proptest::prelude::*;

use dce_core::model::{BoundingBox, Relation3D};
use dce_core::prompting::*;

const FRAGMENTS: [(&str, &str); 3] = [
    (REFERENCE, "You glimpsed the image and saw a"),
    (SUBCLASS, "'s subclass; use"),
    (RELATION_3D, "Relative to the camera, the"),
];

#[test]
fn shipped_assets_carry_fragments() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/prompts");
    for (id, fragment) in FRAGMENTS {
        let body = std::fs::read_to_string(dir.join(format!("{id}.v1.txt"))).unwrap();
        assert!(body.contains(fragment), "{id}");
        assert!(TemplateSet::builtin().get(id).unwrap().body().contains(fragment));
    }
    assert_eq!(TemplateSet::load_dir(&dir).unwrap().iter().count(), TemplateSet::builtin().iter().count());
}

#[test]
fn relation_sentence_worked_example() {
    let s = render_3d_relation_sentence(
        "person",
        &BoundingBox::new(10, 10, 50, 90).unwrap(),
        Relation3D::InFrontOf,
        "car",
        &BoundingBox::new(60, 20, 200, 90).unwrap(),
    );
    assert_eq!(
        s,
        "Relative to the camera, the person in [10,10,50,90] in the image is in front of car in [60,20,200,90]"
    );
}

proptest! {
    #[test]
    fn render_is_identity_on_plain_text(text in "[^{}]{0,80}") {
        let t = PromptTemplate::new("plain", "v1", text.clone(), &[]).unwrap();
        let once = render(&t, &Bindings::new()).unwrap();
        prop_assert_eq!(&once, &text);
        let again = PromptTemplate::new("plain", "v1", once.clone(), &[]).unwrap();
        prop_assert_eq!(render(&again, &Bindings::new()).unwrap(), once);
    }

    #[test]
    fn rendered_prompts_have_no_placeholders(cat in "[a-z]{1,10}( [a-z]{1,8})?", fine in "[a-zA-Z{}_ ]{0,10}[a-zA-Z{}][a-zA-Z{}_ ]{0,10}") {
        let r = render_reference_prompt(&cat).unwrap();
        prop_assert!(!has_placeholder(&r));
        prop_assert!(r.contains(&cat));
        let c = render_subclass_clause(&cat, &fine).unwrap();
        prop_assert!(!has_placeholder(&c));
    }

    #[test]
    fn hostile_categories_are_neutralised(cat in "\\{[a-z_]{1,12}\\}") {
        let s = render_3d_relation_sentence(
            &cat,
            &BoundingBox::new(0, 0, 1, 1).unwrap(),
            Relation3D::BehindOf,
            "car",
            &BoundingBox::new(5, 5, 5, 9).unwrap(),
        );
        prop_assert!(!has_placeholder(&s));
        prop_assert!(s.contains("is behind of car in [5,5,5,9]"));
    }
}
