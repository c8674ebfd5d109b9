/** DOM bootstrap: mounts the console into #app and wires delegated events.
 *  All behavior lives in the controller; this file only moves strings and
 *  form values across the DOM boundary. */

import { ApiClient } from "./api.js";
import { Console } from "./controller.js";

export function mount(root: HTMLElement, baseUrl = ""): Console {
  const api = new ApiClient(baseUrl);
  const console_ = new Console(api, (html) => {
    root.innerHTML = html;
  });

  root.addEventListener("submit", (event) => {
    const form = event.target as HTMLFormElement;
    if (form.dataset.role === "login-form") {
      event.preventDefault();
      const data = new FormData(form);
      void console_.login(String(data.get("user_id") ?? ""), String(data.get("secret") ?? ""));
    }
    if (form.dataset.role === "override-form") {
      event.preventDefault();
      const data = new FormData(form);
      const section = root.querySelector("[data-view='detail']") as HTMLElement | null;
      const location = section
        ? {
            course: section.dataset.course ?? "",
            exercise: section.dataset.exercise ?? "",
            student: section.dataset.student ?? "",
          }
        : undefined;
      void console_
        .submitOverride(
          form.dataset.submission ?? "",
          parseFloat(String(data.get("score") ?? "")),
          String(data.get("feedback") ?? ""),
          parseFloat(form.dataset.max ?? "0"),
          location,
        )
        .then((error) => {
          const slot = form.querySelector("[data-role='override-error']");
          if (error && slot) slot.textContent = error;
        });
    }
  });

  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (!target) return;
    event.preventDefault();
    const course = target.dataset.course ?? console_.state.activeCourse ?? "";
    switch (target.dataset.action) {
      case "open-course": {
        const roles = console_.roles.get(course) ?? [];
        if (roles.includes("tutor") || roles.includes("admin")) {
          void console_.showGradeTable(course);
        } else {
          void console_.showOverview(course);
        }
        break;
      }
      case "open-cell": {
        const section = root.querySelector("[data-view='grade-table']") as HTMLElement | null;
        void console_.showDetail(
          section?.dataset.course ?? course,
          target.dataset.exercise ?? "",
          target.dataset.student ?? "",
        );
        break;
      }
    }
  });

  return console_;
}

const rootElement = typeof document !== "undefined" ? document.getElementById("app") : null;
if (rootElement) {
  mount(rootElement);
}
