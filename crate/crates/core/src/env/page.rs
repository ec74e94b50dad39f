use crate::dom::{DomSnapshot, ElementId, PageBuilder, Rect};

use super::{Action, BACKGROUND_CLASS, SCREEN_HEIGHT, SCREEN_WIDTH};

pub const SCREEN: Rect = Rect::new(0.0, 0.0, SCREEN_WIDTH, SCREEN_HEIGHT);

/// The inert strip along the bottom of every page.
pub(crate) fn add_background(b: &mut PageBuilder, parent: ElementId) -> ElementId {
    b.add_with(parent, "div", Rect::new(0.0, 196.0, SCREEN_WIDTH, 14.0), "", &[BACKGROUND_CLASS])
}

/// Effects shared by all tasks: typing replaces a field's value, clicking a
/// checkbox toggles it, and the acted-on element takes focus.
pub fn apply_generic(page: &DomSnapshot, action: &Action) -> DomSnapshot {
    let id = action.element();
    let focused = page.with_focus(Some(id));
    match action {
        Action::Type(_, text) => focused.with_element(id, |e| e.value = text.clone()),
        Action::Click(_) => {
            if page.get(id).is_some_and(|e| e.tag == "input_checkbox") {
                focused.with_element(id, |e| e.checked = !e.checked)
            } else {
                focused
            }
        }
    }
}

pub(crate) fn find_by_class(page: &DomSnapshot, class: &str) -> Option<ElementId> {
    page.preorder().iter().copied().find(|&id| page.get(id).is_some_and(|e| e.has_class(class)))
}

pub(crate) fn has_class(page: &DomSnapshot, id: ElementId, class: &str) -> bool {
    page.get(id).is_some_and(|e| e.has_class(class))
}
