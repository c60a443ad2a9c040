// Loaded dynamically when a real model backend is requested; the package is
// a runtime extra, so only the shape used here is declared.
declare module '@xenova/transformers' {
  export function pipeline(task: string, model?: string, options?: object): Promise<any>;
}
