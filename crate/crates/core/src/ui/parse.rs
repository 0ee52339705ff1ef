use roxmltree::{Document, Node};

use super::{Bounds, ElementSource, UiElement, UiError};

/// Parses a `uiautomator dump` document into parser-sourced elements, in
/// document (pre-order) order. Nodes with zero area or
/// `visible-to-user="false"` are dropped. Missing attributes become absent or
/// false; only XML errors and malformed `bounds` are errors.
pub fn parse_hierarchy(xml: &str) -> Result<Vec<UiElement>, UiError> {
    let doc = Document::parse(xml).map_err(|e| UiError::MalformedHierarchy(e.to_string()))?;
    let mut out = Vec::new();
    for node in doc.descendants().filter(|n| n.has_tag_name("node")) {
        if node.attribute("visible-to-user") == Some("false") {
            continue;
        }
        let Some(raw_bounds) = node.attribute("bounds") else {
            continue;
        };
        let bounds = parse_bounds(raw_bounds)?;
        if bounds.area() == 0 {
            continue;
        }
        out.push(element_from_node(&node, bounds));
    }
    Ok(out)
}

fn element_from_node(node: &Node<'_, '_>, bounds: Bounds) -> UiElement {
    let attr = |name: &str| {
        node.attribute(name)
            .filter(|v| !v.is_empty())
            .map(str::to_string)
    };
    let flag = |name: &str| node.attribute(name) == Some("true");
    let class_name = attr("class").unwrap_or_default();
    UiElement {
        label: None,
        resource_id: attr("resource-id"),
        editable: class_name.contains("EditText"),
        class_name,
        text: attr("text"),
        content_desc: attr("content-desc"),
        bounds,
        clickable: flag("clickable"),
        long_clickable: flag("long-clickable"),
        scrollable: flag("scrollable"),
        source: ElementSource::Parser,
        visual_desc: None,
    }
}

/// `[x1,y1][x2,y2]`. Negative coordinates (off-screen nodes) clamp to 0.
fn parse_bounds(raw: &str) -> Result<Bounds, UiError> {
    let bad = || UiError::MalformedHierarchy(format!("bad bounds attribute {raw:?}"));
    let rest = raw.trim().strip_prefix('[').ok_or_else(bad)?;
    let (first, rest) = rest.split_once("][").ok_or_else(bad)?;
    let second = rest.strip_suffix(']').ok_or_else(bad)?;
    let pair = |s: &str| -> Result<(u32, u32), UiError> {
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        Ok((coord(a).ok_or_else(bad)?, coord(b).ok_or_else(bad)?))
    };
    let (x1, y1) = pair(first)?;
    let (x2, y2) = pair(second)?;
    Bounds::new(x1, y1, x2, y2).map_err(|_| bad())
}

fn coord(s: &str) -> Option<u32> {
    let (neg, digits) = match s.strip_prefix('-') {
        Some(d) => (true, d),
        None => (false, s),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let v: u64 = digits.parse().ok()?;
    if neg {
        Some(0)
    } else {
        u32::try_from(v).ok()
    }
}

/// Serializes elements as a flat uiautomator-style document that
/// [`parse_hierarchy`] reads back field-for-field.
pub fn serialize_hierarchy(elements: &[UiElement], package: &str) -> String {
    let mut out = String::from(
        "<?xml version='1.0' encoding='UTF-8' standalone='yes' ?>\n<hierarchy rotation=\"0\">\n",
    );
    for (i, e) in elements.iter().enumerate() {
        out.push_str(&format!(
            "  <node index=\"{i}\" text=\"{}\" resource-id=\"{}\" class=\"{}\" package=\"{}\" content-desc=\"{}\" clickable=\"{}\" long-clickable=\"{}\" scrollable=\"{}\" focusable=\"{}\" bounds=\"{}\" />\n",
            escape(e.text.as_deref().unwrap_or("")),
            escape(e.resource_id.as_deref().unwrap_or("")),
            escape(&e.class_name),
            escape(package),
            escape(e.content_desc.as_deref().unwrap_or("")),
            e.clickable,
            e.long_clickable,
            e.scrollable,
            e.clickable || e.editable,
            e.bounds,
        ));
    }
    out.push_str("</hierarchy>\n");
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            // not representable in XML 1.0
            c if (c as u32) < 0x20 => {}
            c => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ui::assign_labels;
    use proptest::prelude::*;

    const THREE: &str = include_str!("../../fixtures/hierarchy/three_nodes.xml");
    const TWELVE: &str = include_str!("../../fixtures/hierarchy/twelve_nodes.xml");

    fn b(x1: u32, y1: u32, x2: u32, y2: u32) -> Bounds {
        Bounds::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn single_node_mapping() {
        let xml = r#"<hierarchy><node bounds="[0,0][100,200]" clickable="true" class="android.widget.Button"/></hierarchy>"#;
        let els = parse_hierarchy(xml).unwrap();
        assert_eq!(els.len(), 1);
        assert_eq!(els[0].bounds, b(0, 0, 100, 200));
        assert!(els[0].clickable);
        assert!(!els[0].editable);
        assert_eq!(els[0].resource_id, None);
    }

    #[test]
    fn edit_text_is_editable() {
        let xml = r#"<hierarchy><node bounds="[0,0][10,10]" class="android.widget.EditText"/></hierarchy>"#;
        assert!(parse_hierarchy(xml).unwrap()[0].editable);
    }

    #[test]
    fn three_node_fixture_field_by_field() {
        let els = parse_hierarchy(THREE).unwrap();
        let mut frame = UiElement::new("android.widget.FrameLayout", b(0, 0, 1080, 1920));
        frame.resource_id = Some("com.notes:id/root".into());
        let mut title = UiElement::new("android.widget.EditText", b(40, 200, 1040, 320));
        title.resource_id = Some("com.notes:id/title".into());
        title.text = Some("Title".into());
        title.clickable = true;
        title.editable = true;
        let mut save = UiElement::new("android.widget.ImageButton", b(900, 60, 1040, 180));
        save.resource_id = Some("com.notes:id/save".into());
        save.content_desc = Some("Save".into());
        save.clickable = true;
        save.long_clickable = true;
        assert_eq!(els, vec![frame, title, save]);
    }

    #[test]
    fn twelve_node_fixture_has_seven_labels() {
        let els = parse_hierarchy(TWELVE).unwrap();
        assert_eq!(els.len(), 12);
        let labeled = assign_labels(els).iter().filter(|e| e.label.is_some()).count();
        assert_eq!(labeled, 7);
    }

    #[test]
    fn drops_invisible_and_zero_area() {
        let xml = r#"<hierarchy>
            <node bounds="[0,0][0,50]" clickable="true"/>
            <node bounds="[0,0][50,50]" visible-to-user="false"/>
            <node bounds="[0,0][50,50]" text="kept"/>
        </hierarchy>"#;
        let els = parse_hierarchy(xml).unwrap();
        assert_eq!(els.len(), 1);
        assert_eq!(els[0].text.as_deref(), Some("kept"));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            parse_hierarchy("<hierarchy><node"),
            Err(UiError::MalformedHierarchy(_))
        ));
        for bad in ["0,0,10,10", "[0,0][10]", "[a,0][10,10]", "[10,0][5,10]", "[0,0][10,10]x"] {
            let xml = format!(r#"<hierarchy><node bounds="{bad}"/></hierarchy>"#);
            assert!(
                matches!(parse_hierarchy(&xml), Err(UiError::MalformedHierarchy(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn negative_coordinates_clamp() {
        let xml = r#"<hierarchy><node bounds="[-20,-5][100,40]"/></hierarchy>"#;
        assert_eq!(parse_hierarchy(xml).unwrap()[0].bounds, b(0, 0, 100, 40));
    }

    fn arb_parser_element() -> impl Strategy<Value = UiElement> {
        let text = prop::option::of("[ -~\n\t]{1,12}");
        (
            (0u32..1000, 0u32..1000, 1u32..500, 1u32..500),
            prop::sample::select(vec![
                "android.widget.Button",
                "android.widget.EditText",
                "android.widget.TextView",
                "",
            ]),
            prop::option::of("[a-z.:/_]{1,16}"),
            text.clone(),
            text,
            any::<(bool, bool, bool)>(),
        )
            .prop_map(|((x, y, w, h), class, rid, t, desc, (c, lc, s))| {
                let mut e = UiElement::new(class, Bounds::new(x, y, x + w, y + h).unwrap());
                e.editable = class.contains("EditText");
                e.resource_id = rid;
                e.text = t;
                e.content_desc = desc;
                e.clickable = c;
                e.long_clickable = lc;
                e.scrollable = s;
                e
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_fixed_point(els in prop::collection::vec(arb_parser_element(), 0..15)) {
            let xml = serialize_hierarchy(&els, "com.example");
            let back = parse_hierarchy(&xml).unwrap();
            prop_assert_eq!(&back, &els);
            prop_assert_eq!(serialize_hierarchy(&back, "com.example"), xml);
        }

        #[test]
        fn parse_never_panics(s in ".{0,200}") {
            let _ = parse_hierarchy(&s);
        }
    }
}
